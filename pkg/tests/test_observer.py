import numpy as np
import pytest

from adaptive_uio.base import ConfigError, DivergenceError
from adaptive_uio.observer import (
    AdaptiveObserver,
    GainMode,
    ObserverDrive,
    RiccatiState,
    gain_schedules,
    lyapunov_value,
    step_observer,
    step_riccati,
)
from adaptive_uio.numerics import stage_index
from adaptive_uio.plant import eval_disturbance, eval_theta, unit_alpha


def _oracle_inputs(generator, disturbance):
    def inputs(s: float):
        return 0.0, eval_theta(generator, s), float(eval_disturbance(disturbance, s))

    return inputs


def test_gain_schedules():
    gamma, mu = gain_schedules(0.0, 0.0, [1.0, 0.0], np.eye(2), 2.0, unit_alpha)
    assert gamma == pytest.approx(0.5)
    assert mu == pytest.approx(3.0)
    with pytest.raises(ConfigError):
        gain_schedules(0.0, 0.0, [1.0, 0.0], np.eye(2), 0.0, unit_alpha)


def test_lyapunov_value():
    assert lyapunov_value([1.0, 2.0], np.diag([1.0, 4.0])) == pytest.approx(2.0)


def test_riccati_validation(plant):
    with pytest.raises(ConfigError):
        RiccatiState(plant.A, plant.B, plant.C, N0=-np.eye(2))
    with pytest.raises(ConfigError):
        RiccatiState(plant.A, plant.B, plant.C, k=0.0)


def test_riccati_step_keeps_positive_definite(plant):
    state = RiccatiState(plant.A, plant.B, plant.C)
    for _ in range(2000):
        N, K = step_riccati(state, 1.0, 5.0, 1e-3)
    assert np.array_equal(N, N.T)
    assert state.min_eig > 0
    assert np.allclose(K, N @ plant.C)


def test_observer_needs_exactly_one_gain(plant):
    with pytest.raises(ConfigError):
        AdaptiveObserver(plant)
    with pytest.raises(ConfigError):
        AdaptiveObserver(plant, gain=[1.0, 1.0], riccati=RiccatiState(plant.A, plant.B, plant.C))
    with pytest.raises(ConfigError):
        AdaptiveObserver(plant, gain=[1.0, 1.0, 1.0])
    assert AdaptiveObserver(plant, gain=[23.0, 103.0]).mode is GainMode.FIXED


def test_first_step_latches(plant, generator, disturbance):
    observer = AdaptiveObserver(plant, gain=[23.0, 103.0], x0=[1.0, 1.0])
    assert np.array_equal(observer.step(0.0, -2.0, 1e-3, _oracle_inputs(generator, disturbance)), [1.0, 1.0])


def test_fixed_gain_converges_with_true_parameters(plant, generator, disturbance, truth):
    observer = AdaptiveObserver(plant, gain=[23.0, 103.0])
    inputs = _oracle_inputs(generator, disturbance)
    for t, y in zip(truth.times, truth["y_noisy"], strict=True):
        xbar = observer.step(float(t), float(y), truth.dt, inputs)
    assert np.linalg.norm(truth["x"][-1] - xbar) < 1e-3


def test_riccati_observer_decreases_lyapunov_function(plant, generator, disturbance, truth):
    riccati = RiccatiState(plant.A, plant.B, plant.C, k=1.0)
    observer = AdaptiveObserver(plant, riccati=riccati)
    inputs = _oracle_inputs(generator, disturbance)
    values = []
    for k in range(3001):
        t, y = float(truth.times[k]), float(truth["y_noisy"][k])
        xbar = observer.step(t, y, truth.dt, inputs)
        values.append(lyapunov_value(truth["x"][k] - xbar, riccati.N))
    # γ = α²/k = 1, so V(t) <= V(0) e^{-t}
    for k in (500, 1000, 2000, 3000):
        assert values[k] <= 1.05 * values[0] * np.exp(-truth.times[k]) + 1e-8
    assert riccati.min_eig > 0


def test_observer_bound(plant, generator, disturbance):
    observer = AdaptiveObserver(plant, gain=[23.0, 103.0], x0=[5.0, 5.0], bound=1.0)
    inputs = _oracle_inputs(generator, disturbance)
    observer.step(0.0, -2.0, 1e-3, inputs)
    with pytest.raises(DivergenceError):
        step_observer(observer, 1e-3, -2.0, 1e-3, inputs)


def test_parameter_estimate_shape_is_checked(plant):
    observer = AdaptiveObserver(plant, gain=[23.0, 103.0])
    observer.step(0.0, 0.0, 1e-3, lambda s: (0.0, np.zeros(3), 0.0))
    with pytest.raises(ConfigError):
        observer.step(1e-3, 0.0, 1e-3, lambda s: (0.0, np.zeros(3), 0.0))


def _oracle_drive(generator, disturbance, steps: int, dt: float) -> ObserverDrive:
    half = 0.5 * dt * np.arange(2 * steps + 1)
    idx = stage_index(steps)
    theta = np.array([eval_theta(generator, s) for s in half])
    return ObserverDrive(
        u=np.zeros((steps, 3)), theta=theta[idx], f_hat=eval_disturbance(disturbance, half)[idx]
    )


@pytest.mark.parametrize("start", [0, 500])
def test_fixed_gain_run_matches_step(plant, generator, disturbance, truth, start: int):
    count, dt = 2001, truth.dt
    times, ys = truth.times[:count], truth["y_noisy"][:count]
    drive = _oracle_drive(generator, disturbance, count - 1, dt)
    stream = AdaptiveObserver(plant, gain=[23.0, 103.0], x0=[0.5, -0.5]).run(
        times, ys, drive, dt, start=start
    )
    assert np.array_equal(stream.xbar[: start + 1], np.tile([0.5, -0.5], (start + 1, 1)))

    observer = AdaptiveObserver(plant, gain=[23.0, 103.0], x0=[0.5, -0.5])
    for k in range(start, count):
        xbar = observer.step(float(times[k]), float(ys[k]), dt, drive.inputs(max(k - 1, 0), times[k] - dt, dt))
        assert np.allclose(stream.xbar[k], xbar, atol=1e-12)
    assert np.allclose(stream.K, [23.0, 103.0])


def test_run_reports_divergence_time(plant, generator, disturbance, truth):
    dt = truth.dt
    drive = _oracle_drive(generator, disturbance, 10, dt)
    observer = AdaptiveObserver(plant, gain=[23.0, 103.0], x0=[5.0, 5.0], bound=1.0)
    with pytest.raises(DivergenceError) as exc:
        observer.run(truth.times[:11], truth["y_noisy"][:11], drive, dt)
    assert exc.value.time == pytest.approx(dt)


def test_riccati_run_logs_gain_and_eigenvalue(plant, generator, disturbance, truth):
    dt = truth.dt
    drive = _oracle_drive(generator, disturbance, 1000, dt)
    riccati = RiccatiState(plant.A, plant.B, plant.C, k=1.0)
    stream = AdaptiveObserver(plant, riccati=riccati).run(
        truth.times[:1001], truth["y_noisy"][:1001], drive, dt
    )
    assert stream.N.shape == (1001, 2, 2)
    assert np.all(stream.min_eig > 0)
    assert np.allclose(stream.K, stream.N @ plant.C)
    assert np.allclose(stream.N[-1], riccati.N)


def test_scalar_riccati_matches_closed_form():
    # Ṅ = (2γ + 2a) N - 2c² N² + μ b² with a = -1, b = c = 1, γ = 0.5, μ = 2
    state = RiccatiState([[-1.0]], [1.0], [1.0], N0=[[1.0]])
    dt, steps = 1e-3, 2000
    for _ in range(steps):
        state.step(0.5, 2.0, dt)
    alpha, beta, delta = -1.0, 2.0, 2.0
    root = np.sqrt(alpha**2 + 4 * beta * delta)
    upper, lower = (alpha + root) / (2 * beta), (alpha - root) / (2 * beta)
    ratio = (1.0 - upper) / (1.0 - lower) * np.exp(-beta * (upper - lower) * steps * dt)
    expected = (upper - lower * ratio) / (1.0 - ratio)
    assert state.N[0, 0] == pytest.approx(expected, abs=1e-10)
    assert state.gain[0] == pytest.approx(expected, abs=1e-10)
