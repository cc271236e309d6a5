"""Kreisselmeier regressor extension with DREM mixing, smoothing and freezing."""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike
from typing_extensions import Self

from .base import ConfigError, FloatArray, Record, StreamingStage
from .numerics import (
    adjugate,
    cramer_numerators,
    determinant,
    filter_signal,
    hold_discretization,
    linear_recurrence,
    low_pass,
)

logger = logging.getLogger(__name__)

DEFAULT_EPSILON: float = 1e-3
FREEZE_TOL: float = 1e-12


@dataclass(kw_only=True, frozen=True, eq=False)
class DremEstimate(Record):
    k_hat: FloatArray
    delta: float
    upsilon: FloatArray
    clamped: bool
    frozen_at: float | None = None


@dataclass(kw_only=True, frozen=True, eq=False)
class DremStream(Record):
    """DREM estimates stacked along the first (time) axis."""

    k_hat: FloatArray
    delta: FloatArray
    upsilon: FloatArray
    clamped: np.ndarray

    @classmethod
    def idle(cls, count: int, dimension: int) -> "DremStream":
        return cls(
            k_hat=np.zeros((count, dimension)),
            delta=np.zeros(count),
            upsilon=np.zeros((count, dimension)),
            clamped=np.ones(count, dtype=bool),
        )

    def __len__(self) -> int:
        return len(self.delta)

    def padded(self, start: int) -> "DremStream":
        """Prepends `start` idle samples, for a stage switched on part-way through."""
        lead = DremStream.idle(start, self.k_hat.shape[1])
        return DremStream(
            k_hat=np.concatenate([lead.k_hat, self.k_hat]),
            delta=np.concatenate([lead.delta, self.delta]),
            upsilon=np.concatenate([lead.upsilon, self.upsilon]),
            clamped=np.concatenate([lead.clamped, self.clamped]),
        )

    def first_unclamped(self) -> int | None:
        ready = np.flatnonzero(~self.clamped)
        return int(ready[0]) if ready.size else None

    def at(self, k: int) -> DremEstimate:
        return DremEstimate(
            k_hat=self.k_hat[k].copy(),
            delta=float(self.delta[k]),
            upsilon=self.upsilon[k].copy(),
            clamped=bool(self.clamped[k]),
        )


@dataclass(kw_only=True, frozen=True, eq=False)
class ParameterEstimate(Record):
    xi0: FloatArray
    omega: float
    omega_sq: float
    consistency: float
    flagged: bool


@lru_cache(maxsize=64)
def _decay_hold(h: float, dt: float) -> tuple[float, float, float]:
    phi, g_prev, g_next = hold_discretization([[-h]], [1.0], dt)
    return float(phi[0, 0]), float(g_prev[0]), float(g_next[0])


def _products(m: FloatArray, q: FloatArray) -> FloatArray:
    """[m mᵀ, m q] side by side, for one sample or stacked samples."""
    return np.concatenate([m[..., :, None] * m[..., None, :], (m * q[..., None])[..., None]], axis=-1)


class KreisselmeierState(StreamingStage):
    """Φ̇ = -hΦ + m mᵀ and Ẏ = -hY + m q, started from zero.

    The products m mᵀ and m q are taken as linear between samples, which makes
    the update exact and keeps Φ exactly symmetric.
    """

    name = "kreisselmeier"

    def __init__(self, dimension: int, h: float):
        if dimension < 1:
            raise ConfigError(f"regression dimension must be positive, got {dimension}")
        if h < 0:
            raise ConfigError(f"forgetting rate must be non-negative, got {h}")
        self.d = dimension
        self.h = float(h)
        self.reset()

    def reset(self) -> None:
        self.phi = np.zeros((self.d, self.d))
        self.y = np.zeros(self.d)
        self._prev: FloatArray | None = None

    def _check(self, regressor: FloatArray) -> None:
        if regressor.shape[-1:] != (self.d,):
            raise ConfigError(f"regressor must have shape ({self.d},), got {regressor.shape}")

    def step(self, m: ArrayLike, q: float, dt: float) -> Self:
        """Consumes (m(t_k), q(t_k)), advancing from t_{k-1} when a previous sample exists."""
        regressor = np.asarray(m, dtype=float)
        self._check(regressor)
        if regressor.ndim != 1:
            raise ConfigError(f"regressor must have shape ({self.d},), got {regressor.shape}")
        products = _products(regressor, np.asarray(float(q)))
        if self._prev is not None:
            decay, g_prev, g_next = _decay_hold(self.h, dt)
            block = np.column_stack([self.phi, self.y])
            block = decay * block + g_prev * self._prev + g_next * products
            self.phi = block[:, : self.d]
            self.y = block[:, self.d]
        self._prev = products
        return self

    def run(self, regressors: ArrayLike, measurements: ArrayLike, dt: float) -> tuple[FloatArray, FloatArray]:
        """Φ and Y for a whole stream, from zero at its first sample; leaves the state at the end."""
        self.reset()
        ms = np.asarray(regressors, dtype=float)
        qs = np.asarray(measurements, dtype=float)
        self._check(ms)
        if len(ms) == 0:
            return np.zeros((0, self.d, self.d)), np.zeros((0, self.d))
        products = _products(ms, qs)
        decay, g_prev, g_next = _decay_hold(self.h, dt)
        drive = g_prev * products[:-1] + g_next * products[1:]
        blocks = linear_recurrence(
            [[decay]], drive[:, None], np.zeros((1, self.d, self.d + 1))
        )[:, 0]
        self.phi = blocks[-1, :, : self.d].copy()
        self.y = blocks[-1, :, self.d].copy()
        self._prev = products[-1]
        return blocks[:, :, : self.d], blocks[:, :, self.d]


def step_extension(s: KreisselmeierState, m: ArrayLike, q: float, dt: float) -> KreisselmeierState:
    return s.step(m, q, dt)


def drem_extract(s: KreisselmeierState, eps: float = DEFAULT_EPSILON) -> DremEstimate:
    """k̂ᵢ = Υᵢ / max(Δ, ε) with Δ = det Φ and Υ = adj(Φ) Y."""
    if not eps > 0:
        raise ConfigError(f"clamp level must be positive, got {eps}")
    delta = determinant(s.phi)
    upsilon = adjugate(s.phi) @ s.y
    return DremEstimate(
        k_hat=upsilon / max(delta, eps),
        delta=delta,
        upsilon=upsilon,
        clamped=delta <= eps,
    )


def extract_stream(phi: ArrayLike, y: ArrayLike, eps: float = DEFAULT_EPSILON) -> DremStream:
    """`drem_extract` over stacked Φ and Y, with Υ from Cramer's rule."""
    if not eps > 0:
        raise ConfigError(f"clamp level must be positive, got {eps}")
    phis = np.asarray(phi, dtype=float)
    delta = np.linalg.det(phis) if len(phis) else np.zeros(0)
    upsilon = cramer_numerators(phis, y)
    return DremStream(
        k_hat=upsilon / np.maximum(delta, eps)[:, None],
        delta=delta,
        upsilon=upsilon,
        clamped=delta <= eps,
    )


def estimate_stream(
    regressors: ArrayLike,
    measurements: ArrayLike,
    *,
    h: float,
    eps: float = DEFAULT_EPSILON,
    dt: float,
) -> list[DremEstimate]:
    """Runs extension and extraction over a whole sampled regression."""
    ms = np.asarray(regressors, dtype=float)
    stream = extract_stream(*KreisselmeierState(ms.shape[1], h).run(ms, measurements, dt), eps)
    return [stream.at(k) for k in range(len(stream))]


class EstimateSmoother(StreamingStage):
    """σ/(p+σ) on k̂, seeded with the first unclamped estimate and silent before it."""

    name = "smoother"

    def __init__(self, sigma: float, dimension: int):
        self._filter = low_pass(sigma, shape=(dimension,))
        self.reset()

    def reset(self) -> None:
        self._filter.reset()
        self.active = False

    def step(self, estimate: DremEstimate, dt: float) -> DremEstimate:
        if not self.active:
            if estimate.clamped:
                return estimate.replace(k_hat=np.zeros_like(estimate.k_hat))
            self._filter.seed(estimate.k_hat)
            self.active = True
        return estimate.replace(k_hat=self._filter.step(estimate.k_hat, dt))

    def run(self, stream: DremStream, dt: float) -> FloatArray:
        """Smoothed k̂ for a whole stream, zero before its first unclamped sample."""
        self.reset()
        out = np.zeros_like(stream.k_hat)
        start = stream.first_unclamped()
        if start is None:
            return out
        self._filter.seed(stream.k_hat[start])
        self.active = True
        out[start:] = self._filter.run(stream.k_hat[start:], dt)
        return out


def smooth(samples: ArrayLike, sigma: float, dt: float) -> FloatArray:
    """Applies σ/(p+σ) elementwise along the first (time) axis of a stream."""
    if not sigma > 0:
        raise ConfigError(f"smoothing parameter must be positive, got {sigma}")
    data = np.asarray(samples, dtype=float)
    return filter_signal(low_pass(sigma, shape=data.shape[1:]), data, dt)


class EstimateFreeze(StreamingStage):
    """Holds the estimate reached at t_D; waits for the first unclamped sample if needed."""

    name = "freeze"

    def __init__(self, t_freeze: float):
        if t_freeze < 0:
            raise ConfigError(f"freeze time must be non-negative, got {t_freeze}")
        self.t_freeze = float(t_freeze)
        self.reset()

    def reset(self) -> None:
        self.frozen: DremEstimate | None = None
        self.index: int | None = None
        self._deferred = False

    def _warn_deferred(self) -> None:
        if not self._deferred:
            logger.warning(
                "determinant still clamped at t_D = %.4g s, freeze deferred", self.t_freeze
            )
            self._deferred = True

    def _hold(self, t: float, estimate: DremEstimate) -> DremEstimate:
        self.frozen = estimate.replace(frozen_at=t)
        logger.info(
            "estimate frozen at t = %.4g s: %s", t, np.array2string(estimate.k_hat, precision=6)
        )
        return self.frozen

    def step(self, t: float, estimate: DremEstimate) -> DremEstimate:
        if self.frozen is not None:
            return self.frozen
        if t < self.t_freeze - FREEZE_TOL:
            return estimate
        if estimate.clamped:
            self._warn_deferred()
            return estimate
        return self._hold(t, estimate)

    def run(self, times: ArrayLike, raw: DremStream, smoothed: ArrayLike) -> FloatArray:
        """Held k̂ for a whole stream; `index` is the freeze sample, None if it never came."""
        self.reset()
        t = np.asarray(times, dtype=float)
        held = np.array(smoothed, dtype=float)
        due = int(np.searchsorted(t, self.t_freeze - FREEZE_TOL))
        if due == len(t):
            return held
        if raw.clamped[due]:
            self._warn_deferred()
        ready = np.flatnonzero(~raw.clamped[due:])
        if not ready.size:
            return held
        k = due + int(ready[0])
        self._hold(float(t[k]), raw.at(k).replace(k_hat=held[k].copy()))
        self.index = k
        held[k:] = held[k]
        return held


def freeze(
    times: Iterable[float], estimates: Sequence[DremEstimate], t_freeze: float
) -> list[DremEstimate]:
    stage = EstimateFreeze(t_freeze)
    return [stage.step(t, e) for t, e in zip(times, estimates, strict=True)]


def _split_layout(size: int) -> int:
    if size < 3 or size % 2 == 0:
        raise ConfigError(f"expected an estimate of odd length 2m+1, got {size}")
    return (size - 1) // 2


def extract_parameters(
    k_hat: ArrayLike,
    *,
    harmonics: int = 1,
    consistency_tol: float = 1e-2,
    negative_tol: float = 1e-9,
) -> ParameterEstimate:
    """Splits k̂ = [ξ(0); ω²; ω²ξ(0)] into ξ̂(0) and ω̂.

    The redundant ω²ξ(0) block only feeds the consistency score.
    A negative ω² estimate is flagged and gives ω̂ = 0.
    """
    k = np.asarray(k_hat, dtype=float).ravel()
    if harmonics == 0:
        return ParameterEstimate(xi0=k.copy(), omega=0.0, omega_sq=0.0, consistency=0.0, flagged=False)
    m = _split_layout(k.size)
    xi0 = k[:m].copy()
    omega_sq = float(k[m])
    consistency = float(np.linalg.norm(omega_sq * xi0 - k[m + 1 :]))
    flagged = consistency > consistency_tol * (1.0 + abs(omega_sq) * float(np.linalg.norm(xi0)))
    if omega_sq < -negative_tol:
        flagged = True
    return ParameterEstimate(
        xi0=xi0,
        omega=float(np.sqrt(max(omega_sq, 0.0))),
        omega_sq=omega_sq,
        consistency=consistency,
        flagged=flagged,
    )


def parameter_stream(
    k_hat: ArrayLike, *, harmonics: int = 1
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """(ξ̂(0), ω̂, consistency) for every row of a stacked k̂."""
    k = np.asarray(k_hat, dtype=float)
    count = len(k)
    if harmonics == 0:
        return k.copy(), np.zeros(count), np.zeros(count)
    m = _split_layout(k.shape[1])
    xi0 = k[:, :m].copy()
    omega_sq = k[:, m]
    consistency = np.linalg.norm(omega_sq[:, None] * xi0 - k[:, m + 1 :], axis=1)
    return xi0, np.sqrt(np.maximum(omega_sq, 0.0)), consistency
