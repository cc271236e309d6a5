import numpy as np
import pytest

from adaptive_uio.base import ConfigError, DivergenceError
from adaptive_uio.numerics import Trajectory, integrate_rk4, rk4_step, steps_between


def test_steps_between():
    assert steps_between(0.0, 1.0, 0.1) == 10
    assert steps_between(0.0, 30.0, 1e-4) == 300000
    with pytest.raises(ConfigError):
        steps_between(0.0, 1.0, 0.3)
    with pytest.raises(ConfigError):
        steps_between(0.0, 1.0, 0.0)


def test_rk4_exponential_decay():
    traj = integrate_rk4(lambda t, x: -x, [1.0], (0.0, 1.0), 1e-2)
    assert len(traj) == 101
    assert traj["x"][-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-9)


def test_rk4_step_is_exact_for_cubic_in_time():
    # x' = 3 t² has the polynomial solution t³, integrated exactly by RK4
    x = rk4_step(lambda t, x: np.array([3.0 * t * t]), 1.0, np.array([1.0]), 0.5)
    assert x[0] == pytest.approx(1.5**3)


def test_integrator_reports_divergence():
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(DivergenceError) as exc:
        integrate_rk4(lambda t, x: x * x, [1.0], (0.0, 5.0), 1e-2)
    assert exc.value.time > 0.9
    assert "t =" in exc.value.message


def test_trajectory_channel_lengths_are_checked():
    with pytest.raises(ConfigError):
        Trajectory(t0=0.0, dt=0.1, times=np.arange(3) * 0.1, channels={"a": np.zeros(4)})
    with pytest.raises(ConfigError):
        Trajectory(t0=0.0, dt=0.0, times=np.zeros(1))


def test_trajectory_access_and_tail():
    traj = Trajectory.on_grid(0.0, 0.25, 5, a=np.arange(5), b=np.ones((5, 2)))
    assert list(traj) == ["a", "b"]
    assert "a" in traj and "c" not in traj
    assert traj["b"].shape == (5, 2)
    assert traj.tail_mask(0.5).tolist() == [False, False, True, True, True]

    extended = traj.with_channels(c=np.zeros(5))
    assert set(extended) == {"a", "b", "c"}
    assert "c" not in traj


def _oscillator(t, x):
    return np.array([x[1], -x[0]])


def test_rk4_is_fourth_order():
    errors = []
    for dt in (0.1, 0.05):
        x = integrate_rk4(_oscillator, [1.0, 0.0], (0.0, 2.0), dt)["x"][-1]
        errors.append(np.linalg.norm(x - [np.cos(2.0), -np.sin(2.0)]))
    assert 12.0 <= errors[0] / errors[1] <= 20.0


def test_rk4_oscillator_energy_drift_is_small():
    traj = integrate_rk4(_oscillator, [1.0, 0.0], (0.0, 100.0), 1e-2)
    energy = 0.5 * np.sum(traj["x"] ** 2, axis=1)
    assert np.max(np.abs(energy - 0.5)) <= 1e-8
