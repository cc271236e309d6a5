"""Exact sample-and-hold discretization and whole-stream linear recursions.

A linear recursion x_{k+1} = Φ x_k + w_k is run over a full sampled stream by
bringing Φ to complex Schur form Φ = Z T Zᴴ (already triangular Φ is used as
is). In those coordinates every state is a first-order recursion driven by the
states below it, and lfilter runs each one at C speed.
"""

from typing import Literal

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg, signal

from ..base import ConfigError, FloatArray

Hold = Literal["foh", "zoh"]


def hold_discretization(
    a: ArrayLike, b: ArrayLike, dt: float, hold: Hold = "foh"
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """(Φ, Γ_prev, Γ_next) for ẋ = a x + b v sampled every dt.

    With a first-order hold v is linear between v_k and v_{k+1}; with a
    zero-order hold it stays at v_k and Γ_next is zero. Then
    x_{k+1} = Φ x_k + Γ_prev v_k + Γ_next v_{k+1}.
    """
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[0]
    b = np.asarray(b, dtype=float).reshape(n)
    block = np.zeros((n + 2, n + 2))
    block[:n, :n] = a * dt
    block[:n, n] = b * dt
    block[n, n + 1] = 1.0
    em = linalg.expm(block)
    phi = em[:n, :n]
    gamma0 = em[:n, n]
    gamma1 = em[:n, n + 1]
    if hold == "zoh":
        return phi, gamma0, np.zeros(n)
    return phi, gamma0 - gamma1, gamma1


def hold_drive(g_prev: FloatArray, g_next: FloatArray, samples: FloatArray) -> FloatArray:
    """w_k = Γ_prev ⊗ v_k + Γ_next ⊗ v_{k+1}, stacked along the first axis."""
    drive = np.multiply.outer(g_prev, samples[:-1]) + np.multiply.outer(g_next, samples[1:])
    return np.moveaxis(drive, 0, 1)


def linear_recurrence(phi: ArrayLike, drive: ArrayLike, x0: ArrayLike) -> FloatArray:
    """x_0 = x0 and x_{k+1} = Φ x_k + w_k for every w_k in `drive`.

    `drive` has shape (steps, n, ...) and x0 shape (n, ...); the trailing axes
    are independent columns. Returns the steps + 1 states.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    w = np.asarray(drive, dtype=float)
    start = np.asarray(x0, dtype=float)
    n = phi.shape[0]
    if w.shape[1:] != start.shape or start.shape[0] != n:
        raise ConfigError(
            f"recursion of order {n} got drive {w.shape} and initial state {start.shape}"
        )
    steps = w.shape[0]
    out = np.empty((steps + 1, *start.shape))
    out[0] = start
    if steps == 0:
        return out

    if np.any(np.tril(phi, -1)):
        T, Z = linalg.schur(phi, output="complex")
    else:
        T, Z = phi, np.eye(n)
    zh = Z.conj().T
    v = np.tensordot(zh, w, axes=([1], [1]))
    s0 = np.tensordot(zh, start, axes=1)
    xi = np.empty((n, steps + 1, *start.shape[1:]), dtype=np.result_type(T, w))
    for i in reversed(range(n)):
        e = v[i]
        for j in range(i + 1, n):
            e = e + T[i, j] * xi[j, :-1]
        xi[i, 0] = s0[i]
        zi = np.reshape(T[i, i] * s0[i], (1, *start.shape[1:]))
        states, _ = signal.lfilter([1.0], [1.0, -T[i, i]], e, axis=0, zi=zi)
        xi[i, 1:] = states
    out[1:] = np.moveaxis(np.tensordot(Z, xi[:, 1:], axes=1).real, 0, 1)
    return out
