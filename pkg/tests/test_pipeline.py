import logging
import time

import numpy as np
import pytest

from adaptive_uio.harness import compute_metrics, true_parameters
from adaptive_uio.loop import PipelineEvent, build_stages, default_warm_up, run_pipeline
from adaptive_uio.scenario import builtin_scenario, with_overrides

pytestmark = pytest.mark.slow

NOISE_FREE = {"noise.enabled": False, "simulation.dt": 1e-3}


def _metrics(scenario, trajectory):
    xi0, omega = true_parameters(scenario)
    return compute_metrics(trajectory, xi0=xi0, omega=omega)


def test_noise_free_identification(noise_free_run):
    scenario, traj = noise_free_run
    metrics = _metrics(scenario, traj)
    assert abs(traj["omega_hat"][-1] - 2.0) <= 0.02
    assert np.linalg.norm(traj["xi_hat"][-1] - [-1.0, -2.0]) <= 0.02
    assert metrics["f_error_tail"] <= 0.05
    assert metrics["xtilde_final"] <= 1e-2


def test_estimates_are_held_after_the_freeze(noise_free_run):
    _, traj = noise_free_run
    after = traj.times >= 15.0 - 1e-9
    assert traj["frozen"][after].min() == 1.0
    assert traj["frozen"][~after].max() == 0.0
    held = traj["k_hat"][after]
    assert np.array_equal(held, np.broadcast_to(held[0], held.shape))


def test_event_times(noise_free_run):
    scenario, traj = noise_free_run
    metrics = _metrics(scenario, traj)
    assert metrics["first_unclamped"] >= 2.0
    assert metrics["freeze_time"] == pytest.approx(15.0)
    assert metrics["amplitude_unclamped"] > 15.0
    before = traj.times < 15.0 - 1e-9
    assert not traj["observer_active"][before].any()
    assert np.all(traj["f_hat"][before] == 0.0)
    assert np.all(traj["f_warming"][before] == 1.0)


def test_logged_channels(noise_free_run):
    _, traj = noise_free_run
    n = len(traj)
    assert n == 30001
    shapes = {"x": (n, 2), "z": (n, 2), "xhat": (n, 2), "k_hat": (n, 5), "xi_hat": (n, 2), "K": (n, 2)}
    for name, shape in shapes.items():
        assert traj[name].shape == shape, name
    for name in ("y", "f", "f_hat", "omega_hat", "delta", "fbar"):
        assert traj[name].shape == (n,), name
    assert "lyapunov" not in traj
    assert np.allclose(traj["K"], [23.0, 103.0])


def test_state_estimate_tracks_the_plant(noise_free_run):
    _, traj = noise_free_run
    settled = traj.times >= 5.0
    assert np.max(np.abs(traj["xhat_error"][settled])) <= 1e-2


def test_events_reach_the_callback():
    scenario = with_overrides(builtin_scenario("paper_sec5"), {**NOISE_FREE, "simulation.t_end": 17.0})
    events: list[tuple[PipelineEvent, float]] = []
    run_pipeline(scenario, event_callback=lambda event, t: events.append((event, t)))
    assert [event for event, _ in events] == [
        PipelineEvent.STAGE1_UNCLAMPED,
        PipelineEvent.FROZEN,
        PipelineEvent.OBSERVER_STARTED,
        PipelineEvent.AMPLITUDE_UNCLAMPED,
    ]
    times = dict(events)
    assert times[PipelineEvent.FROZEN] == pytest.approx(15.0)
    assert times[PipelineEvent.STAGE1_UNCLAMPED] >= 2.0


def test_default_warm_up(scenario):
    stages = build_stages(with_overrides(scenario, {"drem.warm_up": None}))
    # the filters at λ = 5 are slower than F
    assert default_warm_up(stages.gains, 5.0, 5.0) == pytest.approx(1.0)
    assert stages.warm_up == pytest.approx(1.0, abs=2e-4)


def test_noisy_identification():
    scenario = with_overrides(builtin_scenario("paper_sec5"), {"simulation.dt": 1e-3})
    metrics = _metrics(scenario, run_pipeline(scenario))
    assert metrics["omega_rel_error"] <= 0.05
    assert metrics["xi_rel_error"] <= 0.1
    assert metrics["xtilde_rms_tail"] <= 0.1


def test_without_disturbance():
    """A known input u = 5 sin 2t keeps the regression excited once f is gone."""
    scenario = with_overrides(
        builtin_scenario("paper_sec5"),
        {
            **NOISE_FREE,
            "disturbance": [],
            "drem.harmonics": 0,
            "input.kind": "sine",
            "input.amplitude": 5.0,
            "input.frequency": 2.0,
            "simulation.t_end": 20.0,
        },
    )
    traj = run_pipeline(scenario)
    assert np.all(traj["f_hat"] == 0.0)
    assert np.all(traj["omega_hat"] == 0.0)
    assert traj["k_hat"].shape == (len(traj), 2)
    assert traj["frozen"][-1] == 1.0
    assert np.linalg.norm(traj["xi_hat"][-1] - [-1.0, -2.0]) <= 0.02
    assert np.linalg.norm(traj["xtilde"][-1]) <= 1e-2


def test_unexcited_regression_defers_the_freeze(caplog):
    scenario = with_overrides(
        builtin_scenario("paper_sec5"),
        {
            **NOISE_FREE,
            "disturbance": [],
            "drem.harmonics": 0,
            "plant.x0": [0.0, 0.0],
            "drem.warm_up": 0.5,
            "drem.t_freeze": 1.5,
            "simulation.t_end": 2.0,
        },
    )
    with caplog.at_level(logging.WARNING):
        traj = run_pipeline(scenario)
    assert "freeze deferred" in caplog.text
    assert not traj["frozen"].any()
    assert traj["clamped"].all()
    due = traj.times >= 1.5 - 1e-9
    assert np.all(traj["observer_active"][due] == 1.0)
    assert not traj["observer_active"][~due].any()
    assert np.all(np.isfinite(traj["xbar"]))
    assert np.max(np.abs(traj["xtilde"])) == 0.0


def test_full_scale_run_is_fast():
    scenario = with_overrides(builtin_scenario("paper_sec5"), {"simulation.dt": 1e-4})
    started = time.perf_counter()
    traj = run_pipeline(scenario)
    assert time.perf_counter() - started <= 30.0
    assert len(traj) == 300001
    assert traj["frozen"][-1] == 1.0


def test_full_scale_runs_are_deterministic():
    scenario = with_overrides(builtin_scenario("paper_sec5"), {"simulation.dt": 1e-3})
    first, second = run_pipeline(scenario), run_pipeline(scenario)
    for name in ("y", "k_hat", "a_hat", "xbar"):
        assert np.array_equal(first[name], second[name]), name



def test_riccati_observer():
    scenario = with_overrides(builtin_scenario("paper_sec5_riccati"), NOISE_FREE)
    traj = run_pipeline(scenario)
    assert np.all(traj["n_min_eig"] > 0)
    assert np.linalg.norm(traj["xtilde"][-1]) <= 1e-2
    active = traj["observer_active"] == 1.0
    assert np.all(np.isfinite(traj["lyapunov"][active]))
