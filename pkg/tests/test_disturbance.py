import numpy as np
import pytest

from adaptive_uio.base import ConfigError
from adaptive_uio.disturbance import (
    AmplitudeEstimator,
    HarmonicEstimate,
    compute_fbar,
    estimate_amplitudes,
    harmonic_coefficients,
    reconstruct_f,
)
from adaptive_uio.numerics import frequency_response, make_filter


def test_fbar_removes_the_parametric_part():
    q_r = np.array([0.0, 3.0])
    s_bar = np.array([0.5, 1.0])
    assert compute_fbar(q_r, s_bar, [-1.0, -2.0], [1.0, 1.0]) == pytest.approx(3.0 + 0.5 + 2.0)
    stacked = compute_fbar(np.tile(q_r, (4, 1)), np.tile(s_bar, (4, 1)), [-1.0, -2.0], [1.0, 1.0])
    assert np.allclose(stacked, 5.5)


@pytest.mark.parametrize("phase", [0.0, 0.3, -2.0])
def test_reconstruction_undoes_the_filter(phase: float):
    omega, lam, r = 2.0, 5.0, 2
    filtered = 5.0 * np.exp(1j * phase) * frequency_response(lam, r, 0, omega)
    estimate = reconstruct_f([filtered.real, filtered.imag], omega, lam, r)
    assert estimate.amplitude == pytest.approx(5.0)
    assert estimate.phase == pytest.approx(phase)
    t = np.linspace(0.0, 10.0, 101)
    assert np.allclose(estimate(t), 5.0 * np.sin(omega * t + phase))
    assert not estimate.warming


def test_reconstruction_validation():
    with pytest.raises(ConfigError):
        reconstruct_f([1.0, 0.0], 0.0, 5.0, 2)
    with pytest.raises(ConfigError):
        reconstruct_f([1.0, 0.0], 2.0, 0.0, 2)


def test_warming_estimate_is_silent():
    estimate = HarmonicEstimate.warming_up(5.0, 2)
    assert estimate.warming
    assert estimate(3.0) == 0.0
    assert np.array_equal(estimate(np.arange(3.0)), np.zeros(3))


def test_amplitudes_of_an_exact_sinusoid():
    omega, dt = 2.0, 1e-3
    a = np.array([1.5, -0.7])
    times = dt * np.arange(20001)
    fbar = a[0] * np.sin(omega * times) + a[1] * np.cos(omega * times)
    final = estimate_amplitudes(times, fbar, omega, 0.5, 1e-3, dt)
    assert not final.clamped
    assert np.allclose(final.k_hat, a, atol=1e-8)


def test_amplitude_stage_starts_clamped():
    stage = AmplitudeEstimator(2.0, 0.5)
    assert np.allclose(stage.regressor(np.pi / 4), [1.0, 0.0], atol=1e-12)
    assert stage.step(0.0, 1.0, 1e-3).clamped
    with pytest.raises(ConfigError):
        AmplitudeEstimator(0.0, 0.5)
    with pytest.raises(ConfigError):
        estimate_amplitudes([], [], 2.0, 0.5, 1e-3, 1e-3)


def test_amplitude_run_matches_step():
    dt = 1e-3
    times = dt * np.arange(3000)
    fbar = 1.5 * np.sin(2.0 * times) - 0.7 * np.cos(2.0 * times) + 0.01 * np.sin(9.0 * times)
    stepped = AmplitudeEstimator(2.0, 0.5)
    expected = [stepped.step(t, f, dt) for t, f in zip(times, fbar, strict=True)]
    stream = AmplitudeEstimator(2.0, 0.5).run(times, fbar, dt)
    assert np.allclose(stream.k_hat, [e.k_hat for e in expected], atol=1e-10)
    assert np.array_equal(stream.clamped, [e.clamped for e in expected])


def test_stacked_coefficients_match_single_reconstruction():
    a = np.array([[0.3, -1.2], [2.0, 0.5], [0.0, 0.0]])
    stacked = harmonic_coefficients(a, 2.0, 5.0, 2)
    for row, coefficients in zip(a, stacked, strict=True):
        assert np.allclose(coefficients, reconstruct_f(row, 2.0, 5.0, 2).coefficients)


@pytest.mark.slow
@pytest.mark.parametrize("r", [1, 2, 3])
@pytest.mark.parametrize("lam", [1.0, 5.0, 20.0])
@pytest.mark.parametrize("omega", [0.5, 2.0, 10.0])
def test_disturbance_survives_filtering_and_estimation(omega: float, lam: float, r: int):
    """sin(ωt + 0.3) through λʳ/(p+λ)ʳ, the amplitude stage and the phasor inversion."""
    dt = 2e-4
    times = dt * np.arange(200001)
    fbar = make_filter(lam, r).run(np.sin(omega * times + 0.3), dt)
    settled = times >= 30.0
    final = AmplitudeEstimator(omega, 0.5, 1e-6).run(times[settled], fbar[settled], dt).at(-1)
    assert not final.clamped
    estimate = reconstruct_f(final.k_hat, omega, lam, r)
    assert estimate.amplitude == pytest.approx(1.0, abs=1e-6)
    assert estimate.phase == pytest.approx(0.3, abs=1e-6)
