"""Fixed-step classical Runge-Kutta integration and the sampled trajectory container."""

from collections.abc import Callable, Iterator
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from ..base import ConfigError, DivergenceError, FloatArray

VectorField = Callable[[float, FloatArray], FloatArray]


def steps_between(t0: float, t1: float, dt: float) -> int:
    """Number of dt steps from t0 to t1; dt must divide the interval."""
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    ratio = (t1 - t0) / dt
    count = round(ratio)
    if count < 0 or abs(ratio - count) > 1e-6 * max(1.0, abs(ratio)):
        raise ConfigError(f"dt = {dt} does not divide the interval [{t0}, {t1}]")
    return int(count)


@dataclass
class Trajectory:
    """Named channels sampled on the uniform grid t0 + k dt."""

    t0: float
    dt: float
    times: FloatArray
    channels: dict[str, FloatArray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"trajectory time step must be positive, got {self.dt}")
        n = len(self.times)
        for name, values in self.channels.items():
            if len(values) != n:
                raise ConfigError(
                    f"channel {name!r} has {len(values)} samples, the time grid has {n}"
                )

    @classmethod
    def on_grid(cls, t0: float, dt: float, n: int, **channels: ArrayLike) -> "Trajectory":
        return cls(
            t0=t0,
            dt=dt,
            times=t0 + dt * np.arange(n),
            channels={name: np.asarray(values, dtype=float) for name, values in channels.items()},
        )

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, name: str) -> FloatArray:
        return self.channels[name]

    def __contains__(self, name: object) -> bool:
        return name in self.channels

    def __iter__(self) -> Iterator[str]:
        return iter(self.channels)

    def with_channels(self, **channels: ArrayLike) -> "Trajectory":
        merged = dict(self.channels)
        merged.update({name: np.asarray(values, dtype=float) for name, values in channels.items()})
        return Trajectory(t0=self.t0, dt=self.dt, times=self.times, channels=merged)

    def tail_mask(self, fraction: float) -> np.ndarray:
        """Boolean mask of the samples in the last `fraction` of the horizon."""
        if len(self) == 0:
            return np.zeros(0, dtype=bool)
        start = self.times[-1] - fraction * (self.times[-1] - self.times[0])
        return self.times >= start


def rk4_step(field_fn: VectorField, t: float, x: FloatArray, dt: float) -> FloatArray:
    k1 = field_fn(t, x)
    k2 = field_fn(t + dt / 2, x + dt / 2 * k1)
    k3 = field_fn(t + dt / 2, x + dt / 2 * k2)
    k4 = field_fn(t + dt, x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_rk4(
    field_fn: VectorField,
    x0: ArrayLike,
    t_span: tuple[float, float],
    dt: float,
    *,
    channel: str = "x",
) -> Trajectory:
    t0, t1 = t_span
    n_steps = steps_between(t0, t1, dt)
    x = np.asarray(x0, dtype=float)
    states = np.empty((n_steps + 1, *x.shape))
    states[0] = x
    for k in range(n_steps):
        t = t0 + k * dt
        x = rk4_step(field_fn, t, x, dt)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("non-finite state encountered", time=t + dt)
        states[k + 1] = x
    return Trajectory.on_grid(t0, dt, n_steps + 1, **{channel: states})


def stage_index(steps: int) -> np.ndarray:
    """Indices into the half-step grid t0 + k dt/2 of the start, midpoint and end of every step."""
    return 2 * np.arange(steps)[:, None] + np.arange(3)


def rk4_affine_maps(M: ArrayLike, b: ArrayLike, dt: float) -> tuple[FloatArray, FloatArray]:
    """Every RK4 step of ẋ = M(t) x + b(t) written as the affine map x ↦ P x + q.

    M has shape (steps, 3, n, n) and b shape (steps, 3, n), sampled at the
    start, midpoint and end of each step. The maps reproduce `rk4_step`.
    """
    mats = np.asarray(M, dtype=float)
    forcing = np.asarray(b, dtype=float)
    m0, mm, m1 = mats[:, 0], mats[:, 1], mats[:, 2]
    b0, bm, b1 = forcing[:, 0], forcing[:, 1], forcing[:, 2]
    half = dt / 2

    def apply(a: FloatArray, v: FloatArray) -> FloatArray:
        return np.einsum("kij,kj->ki", a, v)

    k1, c1 = m0, b0
    k2, c2 = mm + half * (mm @ k1), half * apply(mm, c1) + bm
    k3, c3 = mm + half * (mm @ k2), half * apply(mm, c2) + bm
    k4, c4 = m1 + dt * (m1 @ k3), dt * apply(m1, c3) + b1
    n = mats.shape[-1]
    P = np.eye(n) + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    q = dt / 6 * (c1 + 2 * c2 + 2 * c3 + c4)
    return P, q


def propagate_affine(P: FloatArray, q: FloatArray, x0: ArrayLike) -> FloatArray:
    """x_{k+1} = P_k x_k + q_k from x0; non-finite values are carried, not raised."""
    x = np.asarray(x0, dtype=float)
    states = np.empty((len(P) + 1, *x.shape))
    states[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(P)):
            x = P[k] @ x + q[k]
            states[k + 1] = x
    return states


def first_non_finite(states: FloatArray) -> int | None:
    bad = np.flatnonzero(~np.all(np.isfinite(states.reshape(len(states), -1)), axis=1))
    return int(bad[0]) if bad.size else None
