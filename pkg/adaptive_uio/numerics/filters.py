"""Causal LTI filters of the family λʳ pᵏ / (p + λ)ʳ.

Each filter is realized in controllable canonical form and discretized exactly
under a first-order hold, i.e. assuming the input is linear between samples.
Samples are consumed one at a time with `step` or as a whole stream with `run`:
the first sample only reads the output map, every later one advances the state
over one dt and then reads it.
"""

import logging
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike

from ..base import ConfigError, FloatArray, StreamingStage
from .discrete import hold_discretization, hold_drive, linear_recurrence

logger = logging.getLogger(__name__)


def _canonical_realization(
    lam: float, order: int, numerator: int
) -> tuple[FloatArray, FloatArray, FloatArray, float]:
    # (p + λ)^r = p^r + a_{r-1} p^{r-1} + ... + a_0
    den = np.poly(np.full(order, -lam)).real
    a_coeffs = den[::-1][:-1]
    a = np.zeros((order, order))
    a[:-1, 1:] = np.eye(order - 1)
    a[-1, :] = -a_coeffs
    b = np.zeros(order)
    b[-1] = 1.0
    gain = lam**order
    if numerator < order:
        c = np.zeros(order)
        c[numerator] = gain
        d = 0.0
    else:
        c = -gain * a_coeffs
        d = gain
    return a, b, c, d


@lru_cache(maxsize=256)
def _first_order_hold(
    lam: float, order: int, numerator: int, dt: float
) -> tuple[FloatArray, FloatArray, FloatArray]:
    a, b, _, _ = _canonical_realization(lam, order, numerator)
    return hold_discretization(a, b, dt)


def frequency_response(lam: float, order: int, numerator: int, omega: float) -> complex:
    """Value of λʳ (iω)ᵏ / (iω + λ)ʳ."""
    s = 1j * omega
    return complex(lam**order * s**numerator / (s + lam) ** order)


class LtiFilter(StreamingStage):
    """State-space realization of λʳ pᵏ / (p + λ)ʳ acting on scalars or arrays."""

    name = "lti_filter"

    def __init__(
        self, lam: float, order: int, numerator: int = 0, *, shape: tuple[int, ...] = ()
    ):
        if not lam > 0:
            raise ConfigError(f"filter bandwidth must be positive, got {lam}")
        if order < 1:
            raise ConfigError(f"filter order must be at least 1, got {order}")
        if not 0 <= numerator <= order:
            raise ConfigError(
                f"improper filter requested: numerator order {numerator} > denominator order {order}"
            )
        self.lam = float(lam)
        self.order = order
        self.numerator = numerator
        self.shape = tuple(shape)
        _, _, self.c, self.d = _canonical_realization(self.lam, order, numerator)
        self.reset()

    def reset(self) -> None:
        self.state = np.zeros((self.order, *self.shape))
        self._u_prev: FloatArray | None = None

    def seed(self, u: ArrayLike) -> None:
        """Places a unity-DC-gain filter at its equilibrium for the constant input u."""
        if self.numerator != 0:
            raise ConfigError("only low-pass filters (numerator order 0) can be seeded")
        value = np.asarray(u, dtype=float).reshape(self.shape)
        self.state = np.zeros((self.order, *self.shape))
        self.state[0] = value / self.lam**self.order
        self._u_prev = value

    def output(self, u: FloatArray) -> FloatArray:
        return np.tensordot(self.c, self.state, axes=1) + self.d * u

    def step(self, u: ArrayLike, dt: float) -> FloatArray | float:
        value = np.asarray(u, dtype=float)
        if value.shape != self.shape:
            raise ConfigError(f"filter expects input of shape {self.shape}, got {value.shape}")
        if self._u_prev is not None:
            phi, g_prev, g_next = _first_order_hold(self.lam, self.order, self.numerator, dt)
            self.state = (
                np.tensordot(phi, self.state, axes=1)
                + np.multiply.outer(g_prev, self._u_prev)
                + np.multiply.outer(g_next, value)
            )
        self._u_prev = value
        out = self.output(value)
        return float(out) if not self.shape else out

    def run(self, samples: ArrayLike, dt: float) -> FloatArray:
        """Consumes a whole stream (first axis is time), continuing from the current state.

        Gives the same outputs as calling `step` once per sample.
        """
        data = np.asarray(samples, dtype=float)
        if data.shape[1:] != self.shape:
            raise ConfigError(
                f"filter expects samples of shape (n, *{self.shape}), got {data.shape}"
            )
        if len(data) == 0:
            return np.empty((0, *self.shape))
        phi, g_prev, g_next = _first_order_hold(self.lam, self.order, self.numerator, dt)
        start = self.state
        if self._u_prev is not None:
            start = (
                np.tensordot(phi, self.state, axes=1)
                + np.multiply.outer(g_prev, self._u_prev)
                + np.multiply.outer(g_next, data[0])
            )
        states = linear_recurrence(phi, hold_drive(g_prev, g_next, data), start)
        self.state = states[-1].copy()
        self._u_prev = data[-1].copy()
        return np.tensordot(states, self.c, axes=([1], [0])) + self.d * data


def make_filter(
    lam: float, order: int, numerator: int = 0, *, shape: tuple[int, ...] = ()
) -> LtiFilter:
    return LtiFilter(lam, order, numerator, shape=shape)


def step_filter(f: LtiFilter, u: ArrayLike, dt: float) -> FloatArray | float:
    return f.step(u, dt)


def filter_signal(f: LtiFilter, samples: ArrayLike, dt: float) -> FloatArray:
    """Resets f and runs a whole sampled signal (first axis is time) through it."""
    f.reset()
    return f.run(samples, dt)


def low_pass(sigma: float, *, shape: tuple[int, ...] = ()) -> LtiFilter:
    """First-order smoother σ / (p + σ)."""
    return LtiFilter(sigma, 1, 0, shape=shape)
