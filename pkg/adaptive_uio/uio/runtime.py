import logging
from typing import TYPE_CHECKING, Protocol

import numpy as np
from numpy.typing import ArrayLike

from ..base import ConfigError, FloatArray, StreamingStage
from ..numerics import (
    LtiFilter,
    filter_signal,
    hold_discretization,
    hold_drive,
    linear_recurrence,
    make_filter,
)
from ..numerics.discrete import Hold
from .design import UIOGains

if TYPE_CHECKING:
    from ..plant import Plant

logger = logging.getLogger(__name__)


class DerivativeProvider(Protocol):
    """Supplies y⁽¹⁾ .. y⁽ʳ⁻¹⁾ for the current sample, or for a whole stream."""

    def __call__(self, y: float, x: FloatArray | None, dt: float) -> FloatArray: ...

    def sample(self, ys: FloatArray, xs: FloatArray | None, dt: float) -> FloatArray: ...


class OracleDerivatives:
    """Exact noise-free derivatives C Aʲ x read from the true state."""

    def __init__(self, plant: "Plant"):
        r = plant.relative_degree
        self._maps = np.array(
            [plant.C @ np.linalg.matrix_power(plant.A, j) for j in range(1, r)]
        ).reshape(r - 1, plant.n)

    def __call__(self, y: float, x: FloatArray | None, dt: float) -> FloatArray:
        if x is None:
            raise ConfigError("the derivative oracle needs the true state")
        return self._maps @ x

    def sample(self, ys: FloatArray, xs: FloatArray | None, dt: float) -> FloatArray:
        if xs is None:
            raise ConfigError("the derivative oracle needs the true state")
        return np.asarray(xs, dtype=float) @ self._maps.T


class DirtyDerivatives:
    """Approximate derivatives λʲpʲ/(p+λ)ʲ[y] for measured outputs."""

    def __init__(self, r: int, lam: float):
        self._filters: list[LtiFilter] = [make_filter(lam, j, j) for j in range(1, r)]

    def __call__(self, y: float, x: FloatArray | None, dt: float) -> FloatArray:
        return np.array([f.step(y, dt) for f in self._filters])

    def sample(self, ys: FloatArray, xs: FloatArray | None, dt: float) -> FloatArray:
        values = np.asarray(ys, dtype=float)
        columns = [filter_signal(f, values, dt) for f in self._filters]
        return np.column_stack(columns) if columns else np.zeros((len(values), 0))


class AuxChain(StreamingStage):
    """Terminal auxiliary variable z_r with ż_r = F(z_r + F^{r-1}G y) + L y.

    The chain is linear in z and y, so it is discretized exactly: y is taken as
    linear between samples (foh) or held at the previous sample (zoh).
    """

    name = "aux_chain"

    def __init__(self, gains: UIOGains, z0: ArrayLike | None = None, *, hold: Hold = "foh"):
        self.gains = gains
        self.powers = gains.powers
        n = gains.F.shape[0]
        self._z0 = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float).ravel()
        if self._z0.shape != (n,):
            raise ConfigError(f"z0 must have {n} entries, got {self._z0.size}")
        self.hold = hold
        self._y_gain = gains.F @ self.powers[0] + gains.L
        self._cache: tuple[float, tuple[FloatArray, FloatArray, FloatArray]] | None = None
        self.reset()

    def reset(self) -> None:
        self.z = self._z0.copy()
        self._y_prev: float | None = None

    def _discretization(self, dt: float) -> tuple[FloatArray, FloatArray, FloatArray]:
        if self._cache is None or self._cache[0] != dt:
            self._cache = (dt, hold_discretization(self.gains.F, self._y_gain, dt, self.hold))
        return self._cache[1]

    def step(self, y: float, dt: float) -> FloatArray:
        """Consumes the sample y(t_k) and returns z_r(t_k); the first sample only latches y."""
        if self._y_prev is not None:
            phi, g_prev, g_next = self._discretization(dt)
            self.z = phi @ self.z + g_prev * self._y_prev + g_next * y
        self._y_prev = y
        return self.z

    def run(self, ys: ArrayLike, dt: float) -> FloatArray:
        """z_r over a whole output stream, starting from z0 at the first sample."""
        self.reset()
        values = np.asarray(ys, dtype=float)
        if len(values) == 0:
            return np.empty((0, self._z0.size))
        phi, g_prev, g_next = self._discretization(dt)
        states = linear_recurrence(phi, hold_drive(g_prev, g_next, values), self._z0)
        self.z = states[-1].copy()
        self._y_prev = float(values[-1])
        return states

    def assemble_estimate(self, y: float, derivs: ArrayLike) -> FloatArray:
        """x̂ = z_r + F^{r-1}G y + F^{r-2}G y⁽¹⁾ + ... + G y⁽ʳ⁻¹⁾."""
        d = np.atleast_1d(np.asarray(derivs, dtype=float))
        if d.size != self.gains.r - 1:
            raise ConfigError(
                f"relative degree {self.gains.r} needs {self.gains.r - 1} output derivatives, got {d.size}"
            )
        estimate = self.z + self.powers[0] * y
        for j, value in enumerate(d, start=1):
            estimate = estimate + self.powers[j] * value
        return estimate

    def assemble_stream(self, zs: ArrayLike, ys: ArrayLike, derivs: ArrayLike) -> FloatArray:
        """`assemble_estimate` applied sample by sample to stacked z_r, y and derivatives."""
        z = np.asarray(zs, dtype=float)
        d = np.asarray(derivs, dtype=float).reshape(len(z), -1)
        if d.shape[1] != self.gains.r - 1:
            raise ConfigError(
                f"relative degree {self.gains.r} needs {self.gains.r - 1} output derivatives, got {d.shape[1]}"
            )
        estimate = z + np.multiply.outer(np.asarray(ys, dtype=float), self.powers[0])
        if d.shape[1]:
            estimate = estimate + d @ np.asarray(self.powers[1:])
        return estimate


def step_chain(s: AuxChain, y: float, dt: float) -> FloatArray:
    return s.step(y, dt)
