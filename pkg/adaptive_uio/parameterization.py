"""Measurable linear regression q*(t) = mᵀ(t) k built from y and the auxiliary chain.

Every signal is produced by proper filters λʳpᵏ/(p+λ)ʳ (k ≤ r); unmeasured output
derivatives only ever appear inside such filters, and the products with the
time-varying factor H e^{Γt} are moved across filters with the swapping lemma

    Λʲ[v g] = Σᵢ (-1)ⁱ C(j, i) (p+λ)⁻ⁱ[g⁽ⁱ⁾ Λʲ[v]],    Λ = λ/(p+λ).
"""

import logging
from dataclasses import dataclass
from math import comb

import numpy as np
from numpy.typing import ArrayLike

from .base import ConfigError, FloatArray, Record, StreamingStage
from .numerics import ExponentialPropagator, LtiFilter, exponential_samples, make_filter
from .plant import ExoGenerator, Plant, is_unit_alpha
from .uio import UIOGains

logger = logging.getLogger(__name__)


@dataclass(kw_only=True, frozen=True, eq=False)
class RegressionSample(Record):
    t: float
    q_star: float
    m: FloatArray
    s_bar: FloatArray
    q_r: FloatArray

    def residual(self, k: ArrayLike) -> float:
        return float(self.q_star - self.m @ np.asarray(k, dtype=float))


@dataclass(kw_only=True, frozen=True, eq=False)
class RegressionStream(Record):
    """Regression samples stacked along the first (time) axis."""

    times: FloatArray
    q_star: FloatArray
    m: FloatArray
    s_bar: FloatArray
    q_r: FloatArray

    def __len__(self) -> int:
        return len(self.times)

    def residual(self, k: ArrayLike) -> FloatArray:
        return self.q_star - self.m @ np.asarray(k, dtype=float)


def regression_parameters(xi0: ArrayLike, omega: float | None, harmonics: int = 1) -> FloatArray:
    """The unknown vector [ξ(0); ω²; ω²ξ(0)] (or ξ(0) alone without harmonics)."""
    xi = np.asarray(xi0, dtype=float).ravel()
    if harmonics == 0:
        return xi
    w2 = float(omega) ** 2
    return np.concatenate([xi, [w2], w2 * xi])


def default_left_inverse(B: ArrayLike) -> FloatArray:
    b = np.asarray(B, dtype=float).ravel()
    return b / (b @ b)


class RegressionBuilder(StreamingStage):
    name = "regression"

    def __init__(
        self,
        plant: Plant,
        gains: UIOGains,
        generator: ExoGenerator,
        *,
        lam: float,
        lam_r: float,
        b_bar: ArrayLike | None = None,
        harmonics: int = 1,
        t0: float = 0.0,
    ):
        if not is_unit_alpha(plant.alpha):
            raise ConfigError(
                "the regression is derived for α ≡ 1, a non-unit regressor weight is not supported"
            )
        if harmonics not in (0, 1):
            raise ConfigError(
                f"the regression supports zero or one disturbance harmonic, got {harmonics}"
            )
        self.plant = plant
        self.gains = gains
        self.generator = generator
        self.lam = float(lam)
        self.lam_r = float(lam_r)
        self.harmonics = harmonics
        self.t0 = t0
        self.b_bar = (
            default_left_inverse(plant.B) if b_bar is None else np.asarray(b_bar, dtype=float).ravel()
        )
        if abs(self.b_bar @ plant.B - 1.0) > 1e-12:
            raise ConfigError(f"B̄ B must equal 1, got {self.b_bar @ plant.B:.6g}")

        r = gains.r
        m = generator.m
        self.powers = gains.powers
        self._rows = [p @ generator.H for p in self.powers]
        self._gamma_powers = [np.linalg.matrix_power(generator.Gamma, i) for i in range(r)]
        self.dimension = 2 * m + 1 if harmonics == 1 else m
        self.reset()

    def reset(self) -> None:
        r, n, m = self.gains.r, self.plant.n, self.generator.m
        lam, lam_r = self.lam, self.lam_r
        self._exp = ExponentialPropagator(self.generator.Gamma, self.t0)

        self._z_low = make_filter(lam, r, 0, shape=(n,))
        self._z_diff = make_filter(lam, r, 1, shape=(n,))
        self._y_bank = [make_filter(lam, r, k) for k in range(r + 1)]
        self._u_low = make_filter(lam, r, 0)

        self._s0 = make_filter(lam, r, 0, shape=(m,))
        self._eta: dict[int, LtiFilter] = {}
        self._inner: dict[tuple[int, int], LtiFilter] = {}
        self._outer: dict[int, LtiFilter] = {}
        for j in range(1, r):
            self._eta[j] = make_filter(lam, j, j)
            self._outer[j] = make_filter(lam, r - j, 0, shape=(m,))
            for i in range(1, j + 1):
                self._inner[j, i] = make_filter(lam, i, 0, shape=(m,))

        self._q_diff = make_filter(lam_r, 2, 2)
        self._q_low = make_filter(lam_r, 2, 0)
        self._s_diff = make_filter(lam_r, 2, 2, shape=(m,))
        self._s_low = make_filter(lam_r, 2, 0, shape=(m,))

    def _weight(self, j: int, i: int) -> float:
        return (-1) ** i * comb(j, i) / self.lam**i

    def build_swapping_signals(self, t: float, y: float, z: FloatArray, dt: float) -> FloatArray:
        """S̄ = S₀ + Σⱼ λʳ⁻ʲ/(p+λ)ʳ⁻ʲ [Sⱼ], the regressor block multiplying ξ(0)."""
        E = self._exp(t)
        s_bar = self._s0.step(((z + self.powers[0] * y) @ self.generator.H) @ E, dt)
        for j in range(1, self.gains.r):
            eta = self._eta[j].step(y, dt)
            s_j = eta * (self._rows[j] @ E)
            for i in range(1, j + 1):
                shifted = eta * (self._rows[j] @ self._gamma_powers[i] @ E)
                s_j = s_j + self._weight(j, i) * self._inner[j, i].step(shifted, dt)
            s_bar = s_bar + self._outer[j].step(s_j, dt)
        return s_bar

    def build_q(self, y: float, z: FloatArray, u: float, dt: float) -> FloatArray:
        """q_r = λʳ/(p+λ)ʳ[p x̂ - A x̂ - B u] with x̂ expanded through the chain."""
        ys = [f.step(y, dt) for f in self._y_bank]
        derivative = self._z_diff.step(z, dt)
        level = self._z_low.step(z, dt)
        for j, column in enumerate(self.powers):
            derivative = derivative + column * ys[j + 1]
            level = level + column * ys[j]
        return derivative - self.plant.A @ level - self.plant.B * self._u_low.step(u, dt)

    def emit_regression(
        self, t: float, q_r: FloatArray, s_bar: FloatArray, dt: float
    ) -> RegressionSample:
        bq = float(self.b_bar @ q_r)
        low_q = self._q_low.step(bq, dt)
        low_s = self._s_low.step(s_bar, dt)
        if self.harmonics == 0:
            return RegressionSample(t=t, q_star=low_q, m=low_s, s_bar=s_bar, q_r=q_r)
        q_star = self._q_diff.step(bq, dt)
        m = np.concatenate([self._s_diff.step(s_bar, dt), [-low_q], low_s])
        return RegressionSample(t=t, q_star=q_star, m=m, s_bar=s_bar, q_r=q_r)

    def step(
        self, t: float, y: float, z: FloatArray, dt: float, u: float = 0.0
    ) -> RegressionSample:
        s_bar = self.build_swapping_signals(t, y, z, dt)
        q_r = self.build_q(y, z, u, dt)
        return self.emit_regression(t, q_r, s_bar, dt)

    def run(
        self,
        times: ArrayLike,
        ys: ArrayLike,
        zs: ArrayLike,
        dt: float,
        us: ArrayLike | None = None,
    ) -> RegressionStream:
        """The whole regression over uniformly sampled streams, from freshly reset filters.

        Produces the same samples as calling `step` once per sample.
        """
        self.reset()
        t = np.asarray(times, dtype=float)
        y = np.asarray(ys, dtype=float)
        z = np.asarray(zs, dtype=float)
        u = np.zeros_like(y) if us is None else np.asarray(us, dtype=float)
        H = self.generator.H
        E = exponential_samples(self.generator.Gamma, float(t[0]) if len(t) else 0.0, dt, len(t))

        def rows_times_e(row: FloatArray) -> FloatArray:
            return np.einsum("i,kij->kj", row, E)

        lifted = (z + np.multiply.outer(y, self.powers[0])) @ H
        s_bar = self._s0.run(np.einsum("ki,kij->kj", lifted, E), dt)
        for j in range(1, self.gains.r):
            eta = self._eta[j].run(y, dt)[:, None]
            s_j = eta * rows_times_e(self._rows[j])
            for i in range(1, j + 1):
                shifted = eta * rows_times_e(self._rows[j] @ self._gamma_powers[i])
                s_j = s_j + self._weight(j, i) * self._inner[j, i].run(shifted, dt)
            s_bar = s_bar + self._outer[j].run(s_j, dt)

        ys_f = [f.run(y, dt) for f in self._y_bank]
        derivative = self._z_diff.run(z, dt)
        level = self._z_low.run(z, dt)
        for j, column in enumerate(self.powers):
            derivative = derivative + np.multiply.outer(ys_f[j + 1], column)
            level = level + np.multiply.outer(ys_f[j], column)
        q_r = (
            derivative
            - level @ self.plant.A.T
            - np.multiply.outer(self._u_low.run(u, dt), self.plant.B)
        )

        bq = q_r @ self.b_bar
        low_q = self._q_low.run(bq, dt)
        low_s = self._s_low.run(s_bar, dt)
        if self.harmonics == 0:
            return RegressionStream(times=t, q_star=low_q, m=low_s, s_bar=s_bar, q_r=q_r)
        m = np.column_stack([self._s_diff.run(s_bar, dt), -low_q, low_s])
        return RegressionStream(
            times=t, q_star=self._q_diff.run(bq, dt), m=m, s_bar=s_bar, q_r=q_r
        )
