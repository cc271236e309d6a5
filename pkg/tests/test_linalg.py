import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from adaptive_uio.base import ConfigError, GainDesignError
from adaptive_uio.numerics import (
    ExponentialPropagator,
    adjugate,
    cramer_numerators,
    determinant,
    exponential_samples,
    is_detectable,
    is_hurwitz,
    matrix_exponential,
    numerical_rank,
    observability_decomposition,
    pole_place,
    spectral_abscissa,
)

GAMMA = np.array([[0.0, 1.0], [-36.0, 0.0]])

st_square = st.integers(min_value=1, max_value=5).flatmap(
    lambda n: hnp.arrays(
        np.float64, (n, n), elements=st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
    )
)


@given(m=st_square)
def test_adjugate_identity(m: np.ndarray):
    adj = adjugate(m)
    det = determinant(m)
    n = m.shape[0]
    scale = (1.0 + np.abs(adj).max()) * (1.0 + np.abs(m).max()) * n
    assert np.allclose(m @ adj, det * np.eye(n), atol=1e-10 * scale)
    assert np.allclose(adj @ m, det * np.eye(n), atol=1e-10 * scale)


@given(m=st_square)
def test_determinant_matches_lapack(m: np.ndarray):
    assert determinant(m) == pytest.approx(np.linalg.det(m), abs=1e-9 * (1 + np.abs(m).max()) ** m.shape[0])


def test_adjugate_small_cases():
    assert np.array_equal(adjugate([[7.0]]), np.ones((1, 1)))
    assert np.array_equal(adjugate([[1.0, 2.0], [3.0, 4.0]]), np.array([[4.0, -2.0], [-3.0, 1.0]]))
    assert np.allclose(adjugate(np.eye(4)), np.eye(4))


def test_square_input_required():
    with pytest.raises(ConfigError):
        determinant(np.ones((2, 3)))
    with pytest.raises(ConfigError):
        adjugate(np.ones(3))


@settings(max_examples=50)
@given(s=st.floats(0.0, 1.0), t=st.floats(0.0, 1.0))
def test_exponential_semigroup(s: float, t: float):
    assert np.allclose(
        matrix_exponential(GAMMA, s + t),
        matrix_exponential(GAMMA, s) @ matrix_exponential(GAMMA, t),
        atol=1e-9,
    )


def test_exponential_rejects_non_finite_time():
    with pytest.raises(ConfigError):
        matrix_exponential(GAMMA, float("inf"))


def test_propagator_follows_direct_exponential():
    dt = 1e-3
    propagator = ExponentialPropagator(GAMMA, 0.0)
    for k in range(1, 2001):
        t = k * dt
        value = propagator(t)
        if k % 250 == 0:
            assert np.allclose(value, matrix_exponential(GAMMA, t), atol=1e-9)


def test_propagator_handles_backward_query():
    propagator = ExponentialPropagator(GAMMA, 1.0)
    assert np.allclose(propagator(0.999), matrix_exponential(GAMMA, 0.999), atol=1e-12)
    assert np.allclose(propagator(1.5), matrix_exponential(GAMMA, 1.5), atol=1e-12)


def test_numerical_rank():
    assert numerical_rank(np.zeros((3, 3))) == 0
    assert numerical_rank(np.eye(3)) == 3
    assert numerical_rank([[1.0, 2.0], [2.0, 4.0]]) == 1


def test_hurwitz_and_abscissa():
    assert spectral_abscissa([[-1.0, 0.0], [0.0, -3.0]]) == pytest.approx(-1.0)
    assert is_hurwitz([[-25.0, 1.0], [-125.0, 0.0]])
    assert not is_hurwitz(GAMMA)


def test_pole_place_reproduces_fixed_observer_gain():
    A = np.array([[0.0, 1.0], [-1.0, -2.0]])
    C = np.array([1.0, 0.0])
    L = pole_place(A, C, [-10.0, -15.0])
    assert np.allclose(L, [23.0, 103.0])
    assert np.allclose(np.sort(np.linalg.eigvals(A - np.outer(L, C)).real), [-15.0, -10.0])


def test_pole_place_complex_pair():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    C = np.array([1.0, 0.0])
    poles = [-2.0 + 3.0j, -2.0 - 3.0j]
    L = pole_place(A, C, poles)
    achieved = np.sort_complex(np.linalg.eigvals(A - np.outer(L, C)))
    assert np.allclose(achieved, np.sort_complex(np.array(poles)))


@pytest.mark.parametrize(
    "M, C, poles",
    [
        (np.diag([-1.0, -2.0]), [1.0, 0.0], [-3.0, -4.0]),
        ([[0.0, 1.0], [-1.0, -2.0]], [1.0, 0.0], [-3.0]),
        ([[0.0, 1.0], [-1.0, -2.0]], [1.0, 0.0], [-3.0 + 1.0j, -3.0 + 2.0j]),
    ],
    ids=["unobservable", "pole-count", "not-conjugate"],
)
def test_pole_place_errors(M, C, poles):
    with pytest.raises(GainDesignError):
        pole_place(M, C, poles)


def test_detectability():
    assert is_detectable(np.diag([2.0, -1.0]), [1.0, 0.0])
    assert not is_detectable(np.diag([-1.0, 2.0]), [1.0, 0.0])


def test_observability_decomposition_splits_unobservable_modes():
    M = np.array([[0.0, 1.0], [0.0, -1.0]])
    C = np.array([1.0, 1.0])
    T, n_o = observability_decomposition(M, C)
    assert n_o == 1
    assert np.allclose(T.T @ T, np.eye(2))
    assert np.allclose((C @ T)[n_o:], 0.0)
    assert np.allclose((T.T @ M @ T)[:n_o, n_o:], 0.0)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_adjugate_and_determinant_by_dimension(n: int):
    rng = np.random.default_rng(n)
    for _ in range(10):
        m = rng.standard_normal((n, n))
        adj, det = adjugate(m), determinant(m)
        assert det == pytest.approx(np.linalg.det(m), rel=1e-10, abs=1e-12)
        assert np.allclose(m @ adj, det * np.eye(n), atol=1e-10)
        assert np.allclose(adj @ m, det * np.eye(n), atol=1e-10)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_cramer_numerators_apply_the_adjugate(n: int):
    rng = np.random.default_rng(10 + n)
    stack = rng.standard_normal((8, n, n))
    v = rng.standard_normal((8, n))
    out = cramer_numerators(stack, v)
    for k in range(8):
        assert np.allclose(out[k], adjugate(stack[k]) @ v[k], atol=1e-10)
    with pytest.raises(ConfigError):
        cramer_numerators(stack, v[:, :-1])


@pytest.mark.parametrize("t", [0.0, 0.1, 0.25, 1.0, 3.7])
def test_generator_exponential_closed_form(t: float):
    expected = np.array(
        [[np.cos(6 * t), np.sin(6 * t) / 6], [-6 * np.sin(6 * t), np.cos(6 * t)]]
    )
    assert np.allclose(matrix_exponential(GAMMA, t), expected, atol=1e-12)


def test_exponential_samples_follow_the_clock():
    samples = exponential_samples(GAMMA, 0.5, 1e-3, 2001)
    assert samples.shape == (2001, 2, 2)
    for k in (0, 1, 700, 2000):
        assert np.allclose(samples[k], matrix_exponential(GAMMA, 0.5 + k * 1e-3), atol=1e-9)
    assert exponential_samples(GAMMA, 0.0, 1e-3, 0).shape == (0, 2, 2)
