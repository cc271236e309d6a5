import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from numpy.typing import ArrayLike

from ..base import AssumptionError, ConfigError, FloatArray, GainDesignError, Record
from ..numerics import (
    is_detectable,
    is_hurwitz,
    numerical_rank,
    observability_decomposition,
    pole_place,
    spectral_abscissa,
)

logger = logging.getLogger(__name__)

STAR_TOL: float = 1e-8
STAR_ITER_TOL: float = 1e-10
STAR_MAX_ITER: int = 500
STAR_DAMPING: float = 0.5


@dataclass(kw_only=True, frozen=True, eq=False)
class UIOGains(Record):
    """Observer gains with B = G C A^{r-1} B, M = A - G C Aʳ and F = M - L C."""

    G: FloatArray
    M: FloatArray
    L: FloatArray
    F: FloatArray
    r: int
    star: bool = False

    @property
    def star_residual(self) -> float:
        return float(np.linalg.norm(self.L + np.linalg.matrix_power(self.F, self.r) @ self.G))

    @property
    def powers(self) -> tuple[FloatArray, ...]:
        """Columns F^{r-1-j} G for j = 0 .. r-1."""
        return tuple(
            np.linalg.matrix_power(self.F, self.r - 1 - j) @ self.G for j in range(self.r)
        )

    def residuals(self, A: ArrayLike, B: ArrayLike, C: ArrayLike) -> dict[str, float]:
        a = np.asarray(A, dtype=float)
        b = np.asarray(B, dtype=float).ravel()
        c = np.asarray(C, dtype=float).ravel()
        cab = c @ np.linalg.matrix_power(a, self.r - 1) @ b
        return {
            "input_decoupling": float(np.linalg.norm(b - self.G * cab)),
            "M": float(np.linalg.norm(self.M - a + np.outer(self.G, c @ np.linalg.matrix_power(a, self.r)))),
            "F": float(np.linalg.norm(self.F - self.M + np.outer(self.L, c))),
            "star": self.star_residual,
        }


def relative_degree(A: ArrayLike, B: ArrayLike, C: ArrayLike, tol: float = 1e-12) -> int:
    a = np.asarray(A, dtype=float)
    b = np.asarray(B, dtype=float).ravel()
    c = np.asarray(C, dtype=float).ravel()
    n = a.shape[0]
    if n < 1:
        raise ConfigError("relative degree needs at least one state")
    v = b
    for r in range(1, n + 1):
        if abs(c @ v) > tol:
            return r
        v = a @ v
    raise AssumptionError(f"C A^(j-1) B vanishes for every j <= {n}, no finite relative degree")


def _place_detectable(M: FloatArray, c: FloatArray, poles: ArrayLike) -> FloatArray:
    n = M.shape[0]
    T, n_o = observability_decomposition(M, c)
    desired = np.atleast_1d(np.asarray(poles, dtype=complex))
    if n_o == n:
        return pole_place(M, c, desired)
    if desired.size < n_o:
        raise GainDesignError(f"{n_o} observable modes need {n_o} poles, got {desired.size}")
    logger.info(
        "(C, M) has %d unobservable modes, placing the %d observable ones", n - n_o, n_o
    )
    if n_o == 0:
        return np.zeros(n)
    m_bar = T.T @ M @ T
    c_bar = c @ T
    gain_o = pole_place(m_bar[:n_o, :n_o], c_bar[:n_o], desired[:n_o])
    return T[:, :n_o] @ gain_o


def design_gains(
    A: ArrayLike,
    B: ArrayLike,
    C: ArrayLike,
    r: int,
    poles: ArrayLike | None = None,
    *,
    observer_gain: ArrayLike | None = None,
    enforce_star: bool = False,
) -> UIOGains:
    """Synthesizes G, M, L, F for the unknown-input observer.

    L comes from `observer_gain` when given, otherwise from pole placement on
    (M, C). With enforce_star the star-condition solver refines L and its
    result replaces the placed gain.
    """
    a = np.asarray(A, dtype=float)
    b = np.asarray(B, dtype=float).ravel()
    c = np.asarray(C, dtype=float).ravel()
    n = a.shape[0]
    if not 1 <= r <= n:
        raise ConfigError(f"relative degree must lie in [1, {n}], got {r}")

    cab = float(c @ np.linalg.matrix_power(a, r - 1) @ b)
    if numerical_rank(np.array([[cab]]), tol=1e-12) != numerical_rank(b[:, None]):
        raise GainDesignError(
            f"rank(C A^{r - 1} B) != rank(B): the input cannot be decoupled at relative degree {r}"
        )
    G = b * cab / (cab * cab)
    M = a - np.outer(G, c @ np.linalg.matrix_power(a, r))

    if observer_gain is not None:
        L = np.asarray(observer_gain, dtype=float).ravel()
        if L.shape != (n,):
            raise ConfigError(f"observer gain must have {n} entries, got {L.size}")
    else:
        if poles is None:
            raise ConfigError("either observer poles or an explicit observer gain is required")
        if not is_detectable(M, c):
            raise GainDesignError("(C, M) is not detectable")
        L = _place_detectable(M, c, poles)

    if enforce_star:
        L, F = solve_star_condition(M, G, c, r, seed=L)
    else:
        F = M - np.outer(L, c)
    if not is_hurwitz(F):
        raise GainDesignError(
            f"observer matrix F is not Hurwitz (spectral abscissa {spectral_abscissa(F):.4g})"
        )

    gains = UIOGains(G=G, M=M, L=L, F=F, r=r)
    gains = gains.replace(star=gains.star_residual <= STAR_TOL)
    logger.info(
        "UIO gains: L=%s, spectrum(F)=%s, star residual %.2e",
        np.array2string(L, precision=6),
        np.array2string(np.linalg.eigvals(F), precision=4),
        gains.star_residual,
    )
    return gains


def _star_residual(M: FloatArray, G: FloatArray, c: FloatArray, r: int, L: FloatArray) -> float:
    F = M - np.outer(L, c)
    return float(np.linalg.norm(L + np.linalg.matrix_power(F, r) @ G))


def solve_star_condition(
    M: ArrayLike,
    G: ArrayLike,
    C: ArrayLike,
    r: int,
    *,
    seed: ArrayLike | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Finds L with L + Fʳ G = 0 for F = M - L C and F Hurwitz.

    When r equals the state dimension every L satisfies the condition, so the
    seed is returned unchanged.
    """
    m = np.atleast_2d(np.asarray(M, dtype=float))
    g = np.asarray(G, dtype=float).ravel()
    c = np.asarray(C, dtype=float).ravel()
    n = m.shape[0]
    L = np.zeros(n) if seed is None else np.asarray(seed, dtype=float).ravel().copy()

    def finish(gain: FloatArray) -> tuple[FloatArray, FloatArray]:
        F = m - np.outer(gain, c)
        if not is_hurwitz(F):
            raise GainDesignError("star condition only admits a non-Hurwitz F")
        return gain, F

    if _star_residual(m, g, c, r, L) <= STAR_ITER_TOL and is_hurwitz(m - np.outer(L, c)):
        return L, m - np.outer(L, c)

    if r == 1:
        # L + (M - L C) G = 0  <=>  L (1 - C G) = -M G
        cg = float(c @ g)
        mg = m @ g
        if abs(1.0 - cg) > 1e-12:
            return finish(-mg / (1.0 - cg))
        if np.linalg.norm(mg) <= STAR_ITER_TOL:
            return finish(L)
        raise GainDesignError("star condition is inconsistent: C G = 1 but M G != 0")

    if n == 1:
        # L + (m - c L)^r g = 0 is a polynomial in L
        poly = Polynomial([m[0, 0], -c[0]]) ** r * g[0] + Polynomial([0.0, 1.0])
        roots = [z.real for z in poly.roots() if abs(z.imag) < 1e-9]
        stable = [z for z in roots if m[0, 0] - c[0] * z < 0]
        if not stable:
            raise GainDesignError("no real root of the scalar star condition gives a stable F")
        return finish(np.array([min(stable, key=abs)]))

    for _ in range(STAR_MAX_ITER):
        F = m - np.outer(L, c)
        L = (1 - STAR_DAMPING) * L - STAR_DAMPING * np.linalg.matrix_power(F, r) @ g
        if not np.all(np.isfinite(L)):
            break
        if _star_residual(m, g, c, r, L) <= STAR_ITER_TOL:
            return finish(L)
    raise GainDesignError(
        f"star-condition iteration did not converge in {STAR_MAX_ITER} steps"
    )
