"""Small dense linear-algebra primitives: determinant, adjugate, exponential, placement."""

import logging
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg

from ..base import ConfigError, FloatArray, GainDesignError
from .discrete import linear_recurrence

logger = logging.getLogger(__name__)

RANK_TOL: float = 1e-9


def as_square(M: ArrayLike, *, what: str = "matrix") -> FloatArray:
    a = np.asarray(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ConfigError(f"{what} must be a non-empty square matrix, got shape {a.shape}")
    return a


def numerical_rank(a: ArrayLike, tol: float = RANK_TOL) -> int:
    """Rank from the singular values, relative to the largest one."""
    s = np.linalg.svd(np.atleast_2d(np.asarray(a, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * max(1.0, s[0])))


def determinant(M: ArrayLike) -> float:
    a = as_square(M)
    n = a.shape[0]
    if n == 1:
        return float(a[0, 0])
    if n == 2:
        return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])
    if n == 3:
        return float(
            a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
        )
    return float(np.linalg.det(a))


@lru_cache(maxsize=16)
def _minor_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(n)
    keep = np.array([np.delete(idx, i) for i in range(n)])
    signs = (-1.0) ** np.add.outer(idx, idx)
    return keep, signs


def adjugate(M: ArrayLike) -> FloatArray:
    """Transpose of the cofactor matrix, so that M @ adjugate(M) == det(M) * I."""
    a = as_square(M)
    n = a.shape[0]
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]])
    if n == 3:
        (p, q, r), (s, u, v), (w, x, z) = a
        return np.array(
            [
                [u * z - v * x, -(q * z - r * x), q * v - r * u],
                [-(s * z - v * w), p * z - r * w, -(p * v - r * s)],
                [s * x - u * w, -(p * x - q * w), p * u - q * s],
            ]
        )
    keep, signs = _minor_index(n)
    # minors[i, j] is a with row i and column j removed
    minors = a[keep[:, None, :, None], keep[None, :, None, :]]
    cofactors = np.linalg.det(minors) * signs
    return cofactors.T


def cramer_numerators(M: ArrayLike, v: ArrayLike) -> FloatArray:
    """adj(M) v, entry i being det(M) with column i replaced by v.

    M may be a stack (..., n, n) with v of shape (..., n).
    """
    a = np.asarray(M, dtype=float)
    b = np.asarray(v, dtype=float)
    n = a.shape[-1]
    if a.ndim < 2 or a.shape[-2] != n or b.shape != a.shape[:-1]:
        raise ConfigError(f"cannot apply the adjugate of {a.shape} to {b.shape}")
    out = np.empty(b.shape)
    for i in range(n):
        swapped = a.copy()
        swapped[..., :, i] = b
        out[..., i] = np.linalg.det(swapped)
    return out


def matrix_exponential(Gamma: ArrayLike, t: float = 1.0) -> FloatArray:
    g = as_square(Gamma, what="generator matrix")
    if not np.isfinite(t):
        raise ConfigError(f"matrix exponential requested at non-finite time {t}")
    return linalg.expm(g * t)


class ExponentialPropagator:
    """Evaluates e^{Γt} along a forward-moving clock.

    The value at the latest queried time is kept as an anchor and later times
    are reached by multiplying with cached factors e^{Γ(t - anchor)}, so a
    fixed-step caller pays one small matrix product per query.
    """

    max_cached_factors: int = 32

    def __init__(self, Gamma: ArrayLike, t0: float = 0.0):
        self.gamma = as_square(Gamma, what="generator matrix")
        self._anchor_time = float(t0)
        self._anchor = matrix_exponential(self.gamma, t0)
        self._factors: dict[float, FloatArray] = {}

    def __call__(self, t: float) -> FloatArray:
        delta = t - self._anchor_time
        key = round(delta, 12)
        factor = self._factors.get(key)
        if factor is None:
            if len(self._factors) >= self.max_cached_factors:
                self._factors.clear()
            factor = self._factors[key] = matrix_exponential(self.gamma, key)
        value = self._anchor @ factor
        if delta > 0:
            self._anchor_time, self._anchor = float(t), value
        return value


def exponential_samples(Gamma: ArrayLike, t0: float, dt: float, count: int) -> FloatArray:
    """e^{Γ(t0 + k dt)} for k = 0 .. count - 1, stacked along the first axis."""
    g = as_square(Gamma, what="generator matrix")
    m = g.shape[0]
    if count <= 0:
        return np.empty((0, m, m))
    return linear_recurrence(
        matrix_exponential(g, dt), np.zeros((count - 1, m, m)), matrix_exponential(g, t0)
    )


def spectral_abscissa(M: ArrayLike) -> float:
    return float(np.max(np.linalg.eigvals(as_square(M)).real))


def is_hurwitz(M: ArrayLike) -> bool:
    return spectral_abscissa(M) < 0.0


def observability_matrix(M: ArrayLike, C: ArrayLike) -> FloatArray:
    a = as_square(M)
    n = a.shape[0]
    c = np.asarray(C, dtype=float).reshape(-1, n)
    rows = [c]
    for _ in range(n - 1):
        rows.append(rows[-1] @ a)
    return np.vstack(rows)


def is_detectable(M: ArrayLike, C: ArrayLike, tol: float = RANK_TOL) -> bool:
    """PBH test at every eigenvalue of M that is not strictly stable."""
    a = as_square(M)
    n = a.shape[0]
    c = np.asarray(C, dtype=float).reshape(-1, n)
    for ev in np.linalg.eigvals(a):
        if ev.real < -tol:
            continue
        pencil = np.vstack([ev * np.eye(n) - a, c.astype(complex)])
        s = np.linalg.svd(pencil, compute_uv=False)
        if np.count_nonzero(s > tol * max(1.0, s[0])) < n:
            logger.debug("PBH rank drop at eigenvalue %s", ev)
            return False
    return True


def observability_decomposition(M: ArrayLike, C: ArrayLike) -> tuple[FloatArray, int]:
    """Orthogonal T = [V_o, V_u] whose trailing columns span the unobservable subspace.

    In the coordinates x = T x̄ the upper-right block Tᵀ M T[:n_o, n_o:] vanishes
    and C T has zeros in its trailing n - n_o entries.
    """
    a = as_square(M)
    obs = observability_matrix(a, C)
    _, s, vt = np.linalg.svd(obs)
    n_o = int(np.count_nonzero(s > RANK_TOL * max(1.0, s[0]))) if s.size else 0
    return vt.T.copy(), n_o


def _check_self_conjugate(poles: np.ndarray) -> None:
    ordered = np.sort_complex(poles)
    mirrored = np.sort_complex(poles.conj())
    if not np.allclose(ordered, mirrored, atol=1e-9):
        raise GainDesignError(
            f"complex poles must come in conjugate pairs, got {poles.tolist()}"
        )


def pole_place(M: ArrayLike, C: ArrayLike, poles: ArrayLike) -> FloatArray:
    """Observer gain L placing the spectrum of M - L C by Ackermann's formula.

    The pair is handled through its dual (Mᵀ, Cᵀ): L = φ(M) O⁻¹ eₙ with φ the
    desired characteristic polynomial and O the observability matrix.
    """
    a = as_square(M)
    n = a.shape[0]
    desired = np.atleast_1d(np.asarray(poles, dtype=complex))
    if desired.size != n:
        raise GainDesignError(f"expected {n} poles, got {desired.size}")
    _check_self_conjugate(desired)

    obs = observability_matrix(a, C)
    if numerical_rank(obs) < n:
        raise GainDesignError("(C, M) is not observable, poles cannot be placed")

    coeffs = np.real(np.poly(desired))
    phi = np.zeros_like(a)
    for coeff in coeffs:
        phi = phi @ a + coeff * np.eye(n)

    e_n = np.zeros(n)
    e_n[-1] = 1.0
    gain = phi @ np.linalg.solve(obs, e_n)

    achieved = np.sort_complex(np.linalg.eigvals(a - np.outer(gain, np.asarray(C, dtype=float).ravel())))
    mismatch = np.max(np.abs(achieved - np.sort_complex(desired)))
    if mismatch > 1e-6 * max(1.0, float(np.max(np.abs(desired)))):
        logger.warning("pole placement is ill-conditioned, spectrum mismatch %.3g", mismatch)
    return gain
