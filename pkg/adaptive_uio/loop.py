"""
Estimation pipeline: UIO chain, regression, two DREM stages, disturbance
reconstruction and the adaptive observer, run over a ground-truth trajectory.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from .base import FloatArray
from .disturbance import AmplitudeEstimator, compute_fbar, harmonic_coefficients
from .drem import (
    FREEZE_TOL,
    DremStream,
    EstimateFreeze,
    EstimateSmoother,
    KreisselmeierState,
    extract_parameters,
    extract_stream,
    parameter_stream,
)
from .numerics import Trajectory, exponential_samples, spectral_abscissa, stage_index
from .observer import (
    AdaptiveObserver,
    GainMode,
    ObserverDrive,
    RiccatiState,
    StartMode,
    lyapunov_stream,
)
from .parameterization import RegressionBuilder
from .plant import (
    ExoGenerator,
    HarmonicDisturbance,
    Plant,
    check_assumptions,
    simulate_plant,
)
from .scenario import Scenario
from .uio import AuxChain, DerivativeProvider, DirtyDerivatives, OracleDerivatives, UIOGains, design_gains

logger = logging.getLogger(__name__)


class PipelineEvent(StrEnum):
    STAGE1_UNCLAMPED = "stage1_unclamped"
    FROZEN = "frozen"
    AMPLITUDE_UNCLAMPED = "amplitude_unclamped"
    OBSERVER_STARTED = "observer_started"


EventCallback = Callable[[PipelineEvent, float], None]


@dataclass
class Stages:
    """Everything a scenario needs, built and validated before the first sample."""

    plant: Plant
    generator: ExoGenerator
    disturbance: HarmonicDisturbance
    gains: UIOGains
    chain: AuxChain
    derivatives: DerivativeProvider
    regression: RegressionBuilder
    extension: KreisselmeierState
    smoother: EstimateSmoother
    freezer: EstimateFreeze
    warm_up: float


def default_warm_up(gains: UIOGains, lam: float, lam_r: float) -> float:
    """5 / min(|σ(F)|, λ, λ_r), the time for the slowest transient to drop by e⁻⁵."""
    return 5.0 / min(abs(spectral_abscissa(gains.F)), lam, lam_r)


def build_stages(scenario: Scenario) -> Stages:
    plant = scenario.build_plant()
    generator = scenario.build_generator()
    disturbance = scenario.build_disturbance()
    check_assumptions(plant, generator, disturbance)
    if disturbance.q != scenario.drem.harmonics:
        logger.warning(
            "scenario declares %d harmonics but the disturbance has %d",
            scenario.drem.harmonics,
            disturbance.q,
        )

    gain_cfg = scenario.gains
    gains = design_gains(
        plant.A,
        plant.B,
        plant.C,
        plant.relative_degree,
        gain_cfg.poles,
        observer_gain=gain_cfg.observer_gain,
        enforce_star=gain_cfg.star,
    )
    chain = AuxChain(gains, gain_cfg.z0, hold=gain_cfg.hold)
    derivatives: DerivativeProvider = (
        OracleDerivatives(plant)
        if gain_cfg.derivatives == "oracle"
        else DirtyDerivatives(gains.r, scenario.filters.lam)
    )
    filters = scenario.filters
    regression = RegressionBuilder(
        plant,
        gains,
        generator,
        lam=filters.lam,
        lam_r=filters.lam_r,
        b_bar=filters.b_bar,
        harmonics=scenario.drem.harmonics,
    )
    drem = scenario.drem
    warm_up = drem.warm_up
    if warm_up is None:
        dt = scenario.simulation.dt
        warm_up = math.ceil(default_warm_up(gains, filters.lam, filters.lam_r) / dt) * dt
    logger.debug(
        "filters λ=%.4g λ_r=%.4g, warm-up %.4g s, regression dimension %d",
        filters.lam,
        filters.lam_r,
        warm_up,
        regression.dimension,
    )
    return Stages(
        plant=plant,
        generator=generator,
        disturbance=disturbance,
        gains=gains,
        chain=chain,
        derivatives=derivatives,
        regression=regression,
        extension=KreisselmeierState(regression.dimension, drem.h),
        smoother=EstimateSmoother(drem.sigma, regression.dimension),
        freezer=EstimateFreeze(drem.t_freeze),
        warm_up=warm_up,
    )


def simulate_truth(scenario: Scenario, stages: Stages) -> Trajectory:
    sim = scenario.simulation
    return simulate_plant(
        stages.plant,
        stages.generator,
        stages.disturbance,
        scenario.build_input(),
        scenario.build_noise(),
        (0.0, sim.t_end),
        sim.dt,
        scenario.plant.x0,
    )


def _first_index(times: FloatArray, t: float) -> int | None:
    k = int(np.searchsorted(times, t))
    return k if k < len(times) else None


def estimate_theta(
    generator: ExoGenerator, xi: FloatArray, t0: float, dt: float, active_from: int | None
) -> FloatArray:
    """θ̂ = H e^{Γs} ξ̂ at the RK4 stage times of every step.

    Step k uses the estimate held at sample k + 1; steps ending before
    `active_from` see θ̂ = 0.
    """
    steps = len(xi) - 1
    theta = np.zeros((steps, 3, generator.w))
    if active_from is None or steps <= 0:
        return theta
    E = exponential_samples(generator.Gamma, t0, dt / 2, 2 * steps + 1)
    first = max(active_from - 1, 0)
    idx = stage_index(steps)[first:]
    theta[first:] = np.einsum("ij,kajl,kl->kai", generator.H, E[idx], xi[first + 1 :])
    return theta


def _make_observer(scenario: Scenario, plant: Plant) -> AdaptiveObserver:
    cfg = scenario.observer
    if cfg.mode is GainMode.RICCATI:
        riccati = RiccatiState(plant.A, plant.B, plant.C, N0=cfg.N0, k=cfg.young)
        return AdaptiveObserver(plant, riccati=riccati, x0=cfg.x0, bound=cfg.bound)
    return AdaptiveObserver(plant, gain=cfg.K, x0=cfg.x0, bound=cfg.bound)


def run_pipeline(
    scenario: Scenario,
    *,
    truth: Trajectory | None = None,
    event_callback: EventCallback | None = None,
) -> Trajectory:
    """Runs every estimation stage over the scenario and returns all logged channels.

    The linear stages are filtered over the whole trajectory at once; each
    later stage starts from the sample at which the one before it is ready.
    """
    stages = build_stages(scenario)
    if truth is None:
        truth = simulate_truth(scenario, stages)
    dt, times = truth.dt, truth.times
    count = len(times)
    plant, generator = stages.plant, stages.generator
    harmonics = scenario.drem.harmonics
    b_bar = stages.regression.b_bar
    lam, r = scenario.filters.lam, stages.gains.r
    xs, ys = truth["x"], truth["y_noisy"]
    events: list[tuple[int, int, PipelineEvent]] = []

    z = stages.chain.run(ys, dt)
    xhat = stages.chain.assemble_stream(z, ys, stages.derivatives.sample(ys, xs, dt))
    regression = stages.regression.run(times, ys, z, dt, truth["u"])

    d = stages.regression.dimension
    raw = DremStream.idle(count, d)
    warm = _first_index(times, stages.warm_up - 1e-9 * dt)
    if warm is not None:
        phi, y_ext = stages.extension.run(regression.m[warm:], regression.q_star[warm:], dt)
        raw = extract_stream(phi, y_ext, scenario.drem.eps).padded(warm)
    unclamped = raw.first_unclamped()
    if unclamped is not None:
        events.append((unclamped, 0, PipelineEvent.STAGE1_UNCLAMPED))
    smoothed = stages.smoother.run(raw, dt)
    held = stages.freezer.run(times, raw, smoothed)
    xi_hat, omega_hat, consistency = parameter_stream(held, harmonics=harmonics)

    fbar = np.zeros(count)
    frozen_flag = np.zeros(count)
    raw_a = DremStream.idle(count, 2)
    a_hat = np.zeros((count, 2))
    coefficients = np.zeros((count, 2))
    f_warming = np.ones(count)
    omega = 0.0
    kf = stages.freezer.index
    if kf is not None:
        events.append((kf, 1, PipelineEvent.FROZEN))
        frozen_flag[kf:] = 1.0
        frozen = extract_parameters(held[kf], harmonics=harmonics)
        if frozen.flagged:
            logger.warning(
                "frozen estimate is inconsistent (score %.3g, ω̂² = %.4g)",
                frozen.consistency,
                frozen.omega_sq,
            )
        fbar[kf:] = compute_fbar(regression.q_r[kf:], regression.s_bar[kf:], frozen.xi0, b_bar)
        if harmonics == 1 and frozen.omega > 0:
            omega = frozen.omega
            amplitude = AmplitudeEstimator(omega, scenario.amplitude.h, scenario.amplitude.eps)
            raw_a = amplitude.run(times[kf:], fbar[kf:], dt).padded(kf)
            a_hat = EstimateSmoother(scenario.drem.sigma, 2).run(raw_a, dt)
            ka = raw_a.first_unclamped()
            if ka is not None:
                events.append((ka, 3, PipelineEvent.AMPLITUDE_UNCLAMPED))
                coefficients[ka:] = harmonic_coefficients(a_hat[ka:], omega, lam, r)
                f_warming[ka:] = 0.0
        elif harmonics == 1:
            logger.error("ω̂ = 0 at the freeze, the disturbance cannot be reconstructed")
        else:
            f_warming[kf:] = 0.0
    f_hat = coefficients[:, 0] * np.sin(omega * times) + coefficients[:, 1] * np.cos(omega * times)

    due = _first_index(times, scenario.drem.t_freeze - FREEZE_TOL)
    start = 0 if scenario.observer.start is StartMode.IMMEDIATE else due
    if start is not None:
        events.append((start, 2, PipelineEvent.OBSERVER_STARTED))
    for k, _, event in sorted(events):
        logger.info("%s at t = %.4g s", event.value, times[k])
        if event_callback is not None:
            event_callback(event, float(times[k]))

    steps = max(count - 1, 0)
    half = times[0] + 0.5 * dt * np.arange(2 * steps + 1) if count else np.zeros(0)
    idx = stage_index(steps)
    u_fn = scenario.build_input()
    u_half = np.array([u_fn(float(s)) for s in half])
    f_stage = coefficients[1:, None, 0] * np.sin(omega * half[idx]) + coefficients[
        1:, None, 1
    ] * np.cos(omega * half[idx])
    drive = ObserverDrive(
        u=u_half[idx],
        theta=estimate_theta(generator, xi_hat, float(times[0]) if count else 0.0, dt, due),
        f_hat=f_stage,
    )
    observer = _make_observer(scenario, plant)
    active = np.zeros(count)
    if start is None:
        stream = observer.run(times, ys, drive, dt, start=count)
    else:
        stream = observer.run(times, ys, drive, dt, start=start)
        active[start:] = 1.0
    xtilde = xs - stream.xbar

    channels = {
        "x": xs,
        "y_clean": truth["y_clean"],
        "y": ys,
        "theta": truth["theta"],
        "f": truth["f"],
        "u": truth["u"],
        "z": z,
        "xhat": xhat,
        "q_star": regression.q_star,
        "m": regression.m,
        "s_bar": regression.s_bar,
        "q_r": regression.q_r,
        "delta": raw.delta,
        "clamped": raw.clamped.astype(float),
        "k_raw": raw.k_hat,
        "k_hat": held,
        "frozen": frozen_flag,
        "xi_hat": xi_hat,
        "omega_hat": omega_hat,
        "consistency": consistency,
        "fbar": fbar,
        "delta_a": raw_a.delta,
        "clamped_a": raw_a.clamped.astype(float),
        "a_hat": a_hat,
        "f_hat": f_hat,
        "f_warming": f_warming,
        "observer_active": active,
        "xbar": stream.xbar,
        "xtilde": xtilde,
        "K": stream.K,
        "xhat_error": xs - xhat,
    }
    if stream.N is not None and stream.min_eig is not None:
        channels["n_min_eig"] = stream.min_eig
        channels["lyapunov"] = lyapunov_stream(xtilde, stream.N)
    return Trajectory(t0=truth.t0, dt=dt, times=times, channels=channels)
