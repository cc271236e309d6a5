"""Ground-truth plant, parameter generator, harmonic disturbance and measurement noise."""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike

from .base import (
    AssumptionError,
    AssumptionReport,
    ConfigError,
    DivergenceError,
    FloatArray,
    UIOError,
)
from .numerics import (
    ExponentialPropagator,
    Trajectory,
    exponential_samples,
    first_non_finite,
    integrate_rk4,
    matrix_exponential,
    numerical_rank,
    observability_matrix,
    propagate_affine,
    rk4_affine_maps,
    spectral_abscissa,
    stage_index,
    steps_between,
)
from .uio.design import relative_degree

logger = logging.getLogger(__name__)

AlphaFn = Callable[[float, float], float]
InputFn = Callable[[float], float]


def unit_alpha(y: float, t: float) -> float:
    return 1.0


@dataclass(frozen=True)
class AffineAlpha:
    """Regressor weight α(y) = offset + slope·y."""

    offset: float = 1.0
    slope: float = 0.0

    def __call__(self, y: float, t: float) -> float:
        return self.offset + self.slope * y


def is_unit_alpha(alpha: AlphaFn) -> bool:
    if alpha is unit_alpha:
        return True
    return isinstance(alpha, AffineAlpha) and alpha.offset == 1.0 and alpha.slope == 0.0


def zero_input(t: float) -> float:
    return 0.0


@dataclass(frozen=True)
class SineInput:
    amplitude: float
    frequency: float

    def __call__(self, t: float) -> float:
        return self.amplitude * np.sin(self.frequency * t)


@dataclass(frozen=True)
class StepInput:
    amplitude: float
    time: float = 0.0

    def __call__(self, t: float) -> float:
        return self.amplitude if t >= self.time else 0.0


@dataclass(frozen=True, eq=False)
class Plant:
    """SISO plant ẋ = Ax + B[u + α(y,t)·xᵀθ(t) + f(t)], y = Cx."""

    A: FloatArray
    B: FloatArray
    C: FloatArray
    alpha: AlphaFn = unit_alpha

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ConfigError(f"A must be a non-empty square matrix, got shape {a.shape}")
        n = a.shape[0]
        b = np.asarray(self.B, dtype=float).ravel()
        c = np.asarray(self.C, dtype=float).ravel()
        if b.shape != (n,) or c.shape != (n,):
            raise ConfigError(f"B and C must have {n} entries, got {b.size} and {c.size}")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "C", c)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @cached_property
    def relative_degree(self) -> int:
        return relative_degree(self.A, self.B, self.C)

    def output(self, x: FloatArray) -> float:
        return float(self.C @ x)


@dataclass(frozen=True, eq=False)
class ExoGenerator:
    """Linear generator of the time-varying parameters θ(t) = H e^{Γt} ξ₀."""

    H: FloatArray
    Gamma: FloatArray
    xi0: FloatArray

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.H, dtype=float))
        g = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        xi = np.asarray(self.xi0, dtype=float).ravel()
        m = xi.size
        if g.shape != (m, m) or h.shape[1] != m:
            raise ConfigError(
                f"generator dimensions disagree: H {h.shape}, Gamma {g.shape}, xi0 ({m},)"
            )
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "Gamma", g)
        object.__setattr__(self, "xi0", xi)

    @property
    def w(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.xi0.size

    def propagator(self, t0: float = 0.0) -> ExponentialPropagator:
        return ExponentialPropagator(self.Gamma, t0)


@dataclass(frozen=True)
class Harmonic:
    amplitude: float
    frequency: float
    phase: float = 0.0


@dataclass(frozen=True)
class HarmonicDisturbance:
    harmonics: tuple[Harmonic, ...] = field(default_factory=tuple)

    @property
    def q(self) -> int:
        return len(self.harmonics)

    def __call__(self, t: ArrayLike) -> FloatArray | float:
        return eval_disturbance(self, t)


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian measurement noise, one draw per output sample."""

    mean: float = 0.0
    variance: float = 0.0
    seed: int = 0
    enabled: bool = True

    def __post_init__(self):
        if self.variance < 0:
            raise ConfigError(f"noise variance must be non-negative, got {self.variance}")

    @property
    def silent(self) -> bool:
        return not self.enabled or (self.mean == 0.0 and self.variance == 0.0)

    def sample(self, n: int) -> FloatArray:
        if self.silent:
            return np.zeros(n)
        rng = np.random.default_rng(self.seed)
        return rng.normal(self.mean, np.sqrt(self.variance), n)


def eval_disturbance(d: HarmonicDisturbance, t: ArrayLike) -> FloatArray | float:
    times = np.asarray(t, dtype=float)
    total = np.zeros_like(times)
    for h in d.harmonics:
        total = total + h.amplitude * np.sin(h.frequency * times + h.phase)
    return float(total) if total.ndim == 0 else total


def eval_theta(g: ExoGenerator, t: float) -> FloatArray:
    return g.H @ matrix_exponential(g.Gamma, t) @ g.xi0


def output_derivative_oracle(p: Plant, x: ArrayLike, k: int) -> float:
    """Noise-free y⁽ᵏ⁾ = C Aᵏ x, valid while the input has not yet appeared (k < r)."""
    if not 0 <= k < p.relative_degree:
        raise ConfigError(
            f"output derivative of order {k} depends on the input (relative degree {p.relative_degree})"
        )
    return float(p.C @ np.linalg.matrix_power(p.A, k) @ np.asarray(x, dtype=float))


def _stage_samples(fn: Callable[[float], float], times: FloatArray) -> FloatArray:
    return np.array([fn(float(s)) for s in times])


def simulate_plant(
    p: Plant,
    g: ExoGenerator,
    d: HarmonicDisturbance,
    u: InputFn,
    noise: NoiseModel,
    t_span: tuple[float, float],
    dt: float,
    x0: ArrayLike,
) -> Trajectory:
    """RK4 ground truth with channels x, y_clean, y_noisy, theta, f and u.

    With α ≡ 1 the plant is linear in x, so every RK4 step is an affine map
    built for the whole horizon at once; any other α goes through the generic
    integrator.
    """
    t0, t1 = t_span
    if is_unit_alpha(p.alpha):
        n_steps = steps_between(t0, t1, dt)
        half = t0 + 0.5 * dt * np.arange(2 * n_steps + 1)
        E = exponential_samples(g.Gamma, t0, dt / 2, len(half))
        theta_half = np.einsum("ij,kjl,l->ki", g.H, E, g.xi0)
        u_half = _stage_samples(u, half)
        forcing = u_half + eval_disturbance(d, half)
        idx = stage_index(n_steps)
        M = p.A + p.B[:, None] * theta_half[idx][..., None, :]
        states = propagate_affine(
            *rk4_affine_maps(M, np.multiply.outer(forcing[idx], p.B), dt),
            np.asarray(x0, dtype=float),
        )
        bad = first_non_finite(states)
        if bad is not None:
            raise DivergenceError("non-finite state encountered", time=t0 + bad * dt)
        traj = Trajectory.on_grid(t0, dt, n_steps + 1, x=states)
        theta, u_grid = theta_half[::2], u_half[::2]
    else:
        propagator = g.propagator(t0)

        def field_fn(t: float, x: FloatArray) -> FloatArray:
            y = p.C @ x
            theta = g.H @ propagator(t) @ g.xi0
            drive = u(t) + p.alpha(y, t) * (x @ theta) + eval_disturbance(d, t)
            return p.A @ x + p.B * drive

        traj = integrate_rk4(field_fn, x0, t_span, dt)
        E = exponential_samples(g.Gamma, t0, dt, len(traj))
        theta = np.einsum("ij,kjl,l->ki", g.H, E, g.xi0)
        u_grid = _stage_samples(u, traj.times)

    y_clean = traj["x"] @ p.C
    y_noisy = y_clean.copy() if noise.silent else y_clean + noise.sample(len(traj))
    return traj.with_channels(
        y_clean=y_clean,
        y_noisy=y_noisy,
        theta=theta,
        f=eval_disturbance(d, traj.times),
        u=u_grid,
    )


def check_assumptions(
    p: Plant, g: ExoGenerator, d: HarmonicDisturbance, *, strict: bool = True
) -> AssumptionReport:
    """Structural checks on the plant, generator and disturbance.

    Every violated assumption is listed; with strict=True the report is raised
    as an AssumptionError when anything is violated.
    """
    violations: list[str] = []
    warnings: list[str] = []

    frequencies = [h.frequency for h in d.harmonics]
    if any(w <= 0 for w in frequencies):
        violations.append("disturbance: frequencies must be positive")
    if len(set(frequencies)) != len(frequencies):
        violations.append("disturbance: frequencies must be distinct")

    obs_rank = numerical_rank(observability_matrix(p.A, p.C))
    if obs_rank < p.n:
        violations.append(f"observability: (A, C) is not observable (rank {obs_rank} < {p.n})")

    input_rank = numerical_rank(p.B[:, None])
    output_rank = numerical_rank(p.C[None, :])
    if input_rank < 1:
        violations.append("rank: B must have full column rank")
    if output_rank < 1:
        violations.append("rank: C must have full row rank")

    r: int | None = None
    try:
        r = p.relative_degree
    except UIOError as e:
        violations.append(f"relative degree: {e.message}")

    abscissa = spectral_abscissa(g.Gamma)
    if abscissa > 1e-9:
        warnings.append(f"generator: unstable (spectral abscissa {abscissa:.3g})")
        logger.warning("generator spectral abscissa %.3g > 0, θ(t) grows on the horizon", abscissa)

    if not callable(p.alpha):
        violations.append("regressor: α(y, t) must be callable")
    if g.w != p.n:
        violations.append(
            f"regressor: θ must have one entry per state, got {g.w} for n = {p.n}"
        )

    report = AssumptionReport(
        observability_rank=obs_rank,
        input_rank=input_rank,
        output_rank=output_rank,
        relative_degree=r,
        generator_dims=(g.w, g.m),
        violations=tuple(violations),
        warnings=tuple(warnings),
    )
    if violations:
        if strict:
            raise AssumptionError("; ".join(violations))
        return report
    logger.info(
        "assumptions hold: n=%d, r=%s, observability rank %d, generator %dx%d",
        p.n,
        r,
        obs_rank,
        g.w,
        g.m,
    )
    return report
