"""Derivative-free adaptive observer with a fixed or Riccati-scheduled output injection."""

import logging
from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from numpy.typing import ArrayLike
from typing_extensions import Self

from .base import ConfigError, DivergenceError, FloatArray, Record, StreamingStage
from .numerics import propagate_affine, rk4_affine_maps, rk4_step
from .plant import AlphaFn, Plant, is_unit_alpha

logger = logging.getLogger(__name__)

# (u, θ̂, f̂) at a given time
ObserverInputs = Callable[[float], tuple[float, FloatArray, float]]


@dataclass(kw_only=True, frozen=True, eq=False)
class ObserverDrive(Record):
    """(u, θ̂, f̂) at the start, midpoint and end of every step.

    u and f_hat have shape (steps, 3), theta (steps, 3, n); step k runs from
    sample k to sample k + 1.
    """

    u: FloatArray
    theta: FloatArray
    f_hat: FloatArray

    def inputs(self, step: int, t0: float, dt: float) -> ObserverInputs:
        """The same values as a callable of time over the step starting at t0."""

        def at(s: float) -> tuple[float, FloatArray, float]:
            j = round(2.0 * (s - t0) / dt)
            return float(self.u[step, j]), self.theta[step, j], float(self.f_hat[step, j])

        return at


@dataclass(kw_only=True, frozen=True, eq=False)
class ObserverStream(Record):
    xbar: FloatArray
    K: FloatArray
    N: FloatArray | None = None
    min_eig: FloatArray | None = None


class GainMode(StrEnum):
    FIXED = "fixed"
    RICCATI = "riccati"


class StartMode(StrEnum):
    IMMEDIATE = "immediate"
    DEFERRED = "deferred"


def gain_schedules(
    y: float, t: float, theta_hat: ArrayLike, N: FloatArray, k: float, alpha: AlphaFn
) -> tuple[float, float]:
    """Tight choices γ = α²(y,t)/k and μ = 1 + k θ̂ᵀNθ̂."""
    if not k > 0:
        raise ConfigError(f"Young constant must be positive, got {k}")
    theta = np.asarray(theta_hat, dtype=float)
    a = alpha(y, t)
    return a * a / k, 1.0 + k * float(theta @ N @ theta)


def lyapunov_value(x_tilde: ArrayLike, N: FloatArray) -> float:
    e = np.asarray(x_tilde, dtype=float)
    return float(e @ np.linalg.solve(N, e))


def lyapunov_stream(x_tilde: ArrayLike, N: ArrayLike) -> FloatArray:
    """V = x̃ᵀN⁻¹x̃ for stacked errors and matrices."""
    e = np.asarray(x_tilde, dtype=float)
    return np.einsum("ki,ki->k", e, np.linalg.solve(N, e[..., None])[..., 0])


class RiccatiState(StreamingStage):
    """Ṅ = 2γN + NAᵀ + AN - 2NCᵀCN + μBBᵀ with gain K = NCᵀ."""

    name = "riccati"

    def __init__(
        self,
        A: ArrayLike,
        B: ArrayLike,
        C: ArrayLike,
        *,
        N0: ArrayLike | None = None,
        k: float = 1.0,
    ):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float).ravel()
        self.C = np.asarray(C, dtype=float).ravel()
        n = self.A.shape[0]
        if not k > 0:
            raise ConfigError(f"Young constant must be positive, got {k}")
        self.k = float(k)
        self._N0 = np.eye(n) if N0 is None else np.asarray(N0, dtype=float)
        if self._N0.shape != (n, n) or np.linalg.eigvalsh(self._N0)[0] <= 0:
            raise ConfigError("N(0) must be a symmetric positive definite n x n matrix")
        self._BBt = np.outer(self.B, self.B)
        self._CtC = np.outer(self.C, self.C)
        self.reset()

    def reset(self) -> None:
        self.N = self._N0.copy()
        self.min_eig = float(np.linalg.eigvalsh(self.N)[0])

    @property
    def gain(self) -> FloatArray:
        return self.N @ self.C

    def derivative(self, N: FloatArray, gamma: float, mu: float) -> FloatArray:
        return (
            2.0 * gamma * N
            + N @ self.A.T
            + self.A @ N
            - 2.0 * N @ self._CtC @ N
            + mu * self._BBt
        )

    def step(self, gamma: float, mu: float, dt: float, *, t: float = 0.0) -> Self:
        N = rk4_step(lambda s, X: self.derivative(X, gamma, mu), 0.0, self.N, dt)
        N = 0.5 * (N + N.T)
        if not np.all(np.isfinite(N)):
            raise DivergenceError("Riccati solution became non-finite", time=t)
        min_eig = float(np.linalg.eigvalsh(N)[0])
        if min_eig <= 0:
            raise DivergenceError(
                f"Riccati solution lost positive definiteness (min eigenvalue {min_eig:.3g})",
                time=t,
            )
        self.N, self.min_eig = N, min_eig
        return self


def step_riccati(
    s: RiccatiState, gamma: float, mu: float, dt: float
) -> tuple[FloatArray, FloatArray]:
    s.step(gamma, mu, dt)
    return s.N, s.gain


class AdaptiveObserver(StreamingStage):
    """x̄̇ = A x̄ + B[u + α(y,t) x̄ᵀθ̂ + f̂] + K(y - C x̄)."""

    name = "adaptive_observer"

    def __init__(
        self,
        plant: Plant,
        *,
        gain: ArrayLike | None = None,
        riccati: RiccatiState | None = None,
        x0: ArrayLike | None = None,
        bound: float = 1e6,
    ):
        if (gain is None) == (riccati is None):
            raise ConfigError("the observer needs exactly one of a fixed gain or a Riccati state")
        self.plant = plant
        self.riccati = riccati
        self.mode = GainMode.RICCATI if riccati is not None else GainMode.FIXED
        self._fixed = None if gain is None else np.asarray(gain, dtype=float).ravel()
        if self._fixed is not None and self._fixed.shape != (plant.n,):
            raise ConfigError(f"observer gain must have {plant.n} entries")
        self._x0 = np.zeros(plant.n) if x0 is None else np.asarray(x0, dtype=float).ravel()
        self.bound = bound
        self.reset()

    def reset(self) -> None:
        self.x = self._x0.copy()
        self._y_prev: float | None = None
        if self.riccati is not None:
            self.riccati.reset()

    @property
    def K(self) -> FloatArray:
        return self.riccati.gain if self.riccati is not None else self._fixed

    def step(self, t: float, y: float, dt: float, inputs: ObserverInputs) -> FloatArray:
        """Consumes y(t) and returns x̄(t), advancing from t - dt when a previous sample exists."""
        if self._y_prev is not None:
            p = self.plant
            t0, y0 = t - dt, self._y_prev
            slope = (y - y0) / dt
            K = self.K

            def field_fn(s: float, xbar: FloatArray) -> FloatArray:
                ys = y0 + slope * s
                u, theta, f_hat = inputs(t0 + s)
                if theta.shape != (p.n,):
                    raise ConfigError(
                        f"θ̂ must have one entry per state ({p.n}), got shape {theta.shape}"
                    )
                drive = u + p.alpha(ys, t0 + s) * (xbar @ theta) + f_hat
                return p.A @ xbar + p.B * drive + K * (ys - p.C @ xbar)

            schedules = None
            if self.riccati is not None:
                _, theta0, _ = inputs(t0)
                schedules = gain_schedules(y0, t0, theta0, self.riccati.N, self.riccati.k, p.alpha)
            self.x = rk4_step(field_fn, 0.0, self.x, dt)
            if not np.all(np.isfinite(self.x)) or np.linalg.norm(self.x) > self.bound:
                raise DivergenceError(
                    f"observer state left the bound {self.bound:.3g}", time=t
                )
            if self.riccati is not None and schedules is not None:
                self.riccati.step(*schedules, dt, t=t)
        self._y_prev = y
        return self.x

    def run(
        self,
        times: ArrayLike,
        ys: ArrayLike,
        drive: ObserverDrive,
        dt: float,
        *,
        start: int = 0,
    ) -> ObserverStream:
        """x̄ over a whole stream: held at x0 before sample `start`, which only latches y.

        A fixed gain makes every step an affine map of x̄, so those are built for
        the whole stream at once; the Riccati gain is advanced sample by sample.
        """
        self.reset()
        t = np.asarray(times, dtype=float)
        y = np.asarray(ys, dtype=float)
        count, n = len(t), self.plant.n
        if drive.theta.shape[-1:] != (n,):
            raise ConfigError(
                f"θ̂ must have one entry per state ({n}), got shape {drive.theta.shape[-1:]}"
            )
        xbar = np.tile(self.x, (count, 1))
        if self.riccati is None:
            if start < count - 1:
                xbar[start:] = self._run_fixed(t[start:], y[start:], drive, dt, start)
            return ObserverStream(xbar=xbar, K=np.tile(self._fixed, (count, 1)))

        N = np.tile(self.riccati.N, (count, 1, 1))
        min_eig = np.full(count, self.riccati.min_eig)
        steps_per_second = max(1, round(1.0 / dt))
        for k in range(start, count):
            step = max(k - 1, 0)
            xbar[k] = self.step(float(t[k]), float(y[k]), dt, drive.inputs(step, float(t[k]) - dt, dt))
            N[k], min_eig[k] = self.riccati.N, self.riccati.min_eig
            if (k - start) % steps_per_second == 0:
                logger.debug("t = %.4g s, min eig N = %.4g", t[k], min_eig[k])
        return ObserverStream(xbar=xbar, K=N @ self.riccati.C, N=N, min_eig=min_eig)

    def _run_fixed(
        self, t: FloatArray, y: FloatArray, drive: ObserverDrive, dt: float, start: int
    ) -> FloatArray:
        p = self.plant
        y_stage = np.column_stack([y[:-1], 0.5 * (y[:-1] + y[1:]), y[1:]])
        t_stage = t[:-1, None] + dt * np.array([0.0, 0.5, 1.0])
        if is_unit_alpha(p.alpha):
            alpha = np.ones_like(y_stage)
        else:
            alpha = np.array(
                [p.alpha(float(v), float(s)) for v, s in zip(y_stage.ravel(), t_stage.ravel(), strict=True)]
            ).reshape(y_stage.shape)
        theta = drive.theta[start:]
        closed = p.A - np.outer(self._fixed, p.C)
        M = closed + (alpha[..., None] * theta)[..., None, :] * p.B[:, None]
        b = np.multiply.outer(drive.u[start:] + drive.f_hat[start:], p.B) + np.multiply.outer(
            y_stage, self._fixed
        )
        states = propagate_affine(*rk4_affine_maps(M, b, dt), self.x)
        norms = np.linalg.norm(states[1:], axis=1)
        bad = np.flatnonzero(~(norms <= self.bound))
        if bad.size:
            raise DivergenceError(
                f"observer state left the bound {self.bound:.3g}", time=float(t[bad[0] + 1])
            )
        self.x = states[-1].copy()
        self._y_prev = float(y[-1])
        return states


def step_observer(
    o: AdaptiveObserver, t: float, y: float, dt: float, inputs: ObserverInputs
) -> FloatArray:
    return o.step(t, y, dt, inputs)
