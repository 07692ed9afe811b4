"""Exact linear-drift analysis: abscissas, Lyapunov algebra, scaling."""

import numpy as np
import pytest

from nonrev import (
    OUModel,
    SkewMatrix,
    covariance_at,
    eigenvector_condition,
    lyapunov_residual,
    ou_drift_matrix,
    random_skew,
    scaling_study,
    spectral_abscissa,
    stationary_covariance,
)

J2 = SkewMatrix(np.array([[0.0, 1.0], [-1.0, 0.0]]))
D24 = np.diag([-1.0, -4.0])


def rk4_lyapunov(B: np.ndarray, sigma0: np.ndarray, t: float, h: float) -> np.ndarray:
    """Reference integrator for sigma' = B sigma + sigma B^T + 2 I."""

    def f(s):
        return B @ s + s @ B.T + 2.0 * np.eye(len(B))

    s = sigma0.astype(float).copy()
    n = int(round(t / h))
    for _ in range(n):
        k1 = f(s)
        k2 = f(s + 0.5 * h * k1)
        k3 = f(s + 0.5 * h * k2)
        k4 = f(s + h * k3)
        s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return s


def test_drift_matrix_values():
    s = random_skew(3, np.random.default_rng(2))
    np.testing.assert_allclose(
        ou_drift_matrix(-np.eye(3), s), -(np.eye(3) + s.entries), atol=1e-15
    )
    np.testing.assert_array_equal(
        ou_drift_matrix(D24, J2), [[-1.0, -4.0], [1.0, -4.0]]
    )


def test_drift_matrix_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ou_drift_matrix(np.diag([1.0, -1.0]), J2)  # not negative definite
    with pytest.raises(ValueError):
        ou_drift_matrix(np.array([[-1.0, 0.3], [0.0, -1.0]]), J2)  # not symmetric
    with pytest.raises(ValueError):
        SkewMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_abscissa_values():
    assert spectral_abscissa(-np.eye(3)) == -1.0
    assert spectral_abscissa(D24) == -1.0
    # eigenvalues (-5 +- i sqrt 7)/2, from the characteristic polynomial
    np.testing.assert_allclose(
        spectral_abscissa(np.array([[-1.0, -4.0], [1.0, -4.0]])), -2.5, atol=1e-14
    )


def test_stationary_covariance():
    np.testing.assert_allclose(stationary_covariance(D24), np.diag([1.0, 0.25]),
                               atol=1e-15)
    with pytest.raises(ValueError):
        stationary_covariance(np.zeros((2, 2)))


def test_lyapunov_residual_oracle():
    # B sigma + sigma B^T + 2I = [[0,-3],[-3,-6]] for this B, sigma = I
    r = lyapunov_residual(np.array([[-1.0, -4.0], [1.0, -4.0]]), np.eye(2))
    assert r == 6.0


def test_lyapunov_identity_for_seeded_models():
    rng = np.random.default_rng(31)
    for dim in (2, 3, 4):
        for _ in range(10):
            a = rng.standard_normal((dim, dim))
            d = -(a @ a.T) - 0.1 * np.eye(dim)
            s = random_skew(dim, rng)
            model = OUModel(D=d, S=s)
            b = model.drift_matrix
            assert np.max(np.abs(b - (d + s.entries @ d))) <= 1e-14
            assert lyapunov_residual(b, model.stationary_covariance) <= 1e-12


def test_covariance_at_basics():
    sigma0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    np.testing.assert_array_equal(covariance_at(-np.eye(2), sigma0, 0.0), sigma0)
    out = covariance_at(-np.eye(2), 3.0 * np.eye(2), 50.0)
    np.testing.assert_allclose(out, np.eye(2), atol=1e-12)


def test_covariance_at_matches_rk4():
    b = np.array([[-1.0, -4.0], [1.0, -4.0]])
    exact = covariance_at(b, np.eye(2), 1.0)
    approx = rk4_lyapunov(b, np.eye(2), 1.0, 1e-4)
    assert np.max(np.abs(exact - approx)) <= 1e-8
    np.testing.assert_allclose(exact, exact.T, atol=1e-14)


def test_covariance_decay_rate_tracks_abscissa():
    # sampling one rotation period apart cancels the oscillatory factor
    b = ou_drift_matrix(D24, J2)
    sinf = stationary_covariance(D24)
    period = 2.0 * np.pi / (np.sqrt(7.0) / 2.0)
    e1 = np.abs(covariance_at(b, np.eye(2), 1.0) - sinf).max()
    e2 = np.abs(covariance_at(b, np.eye(2), 1.0 + period) - sinf).max()
    slope = (np.log(e2) - np.log(e1)) / period
    assert abs(slope - 2.0 * spectral_abscissa(b)) <= 0.1 * 5.0

    e1 = np.abs(covariance_at(D24, np.diag([2.0, 0.25]), 1.0) - sinf).max()
    e2 = np.abs(covariance_at(D24, np.diag([2.0, 0.25]), 3.0) - sinf).max()
    slope = (np.log(e2) - np.log(e1)) / 2.0
    assert abs(slope - 2.0 * spectral_abscissa(D24)) <= 0.1 * 2.0


def test_ordering_against_reversible_abscissa():
    rng = np.random.default_rng(17)
    for _ in range(50):
        dim = int(rng.integers(2, 5))
        a = rng.standard_normal((dim, dim))
        d = -(a @ a.T) - 0.1 * np.eye(dim)
        s = random_skew(dim, rng)
        b = ou_drift_matrix(d, s)
        assert spectral_abscissa(b) <= np.linalg.eigvalsh(d).max() + 1e-10


def test_isotropic_case_is_rate_neutral():
    # with D = -a I the perturbation cannot move the abscissa at all
    rng = np.random.default_rng(7)
    for dim in (2, 3, 4):
        s = random_skew(dim, rng)
        assert abs(spectral_abscissa(ou_drift_matrix(-2.0 * np.eye(dim), s)) + 2.0) \
            <= 1e-12


def test_anisotropic_dense_skew_strictly_improves():
    rng = np.random.default_rng(103)
    d = np.diag([-1.0, -1.7, -4.0])
    for _ in range(5):
        s = random_skew(3, rng)
        assert np.all(s.entries[~np.eye(3, dtype=bool)] != 0.0)
        assert spectral_abscissa(ou_drift_matrix(d, s)) < -1.0 - 1e-8


def test_scaling_study_closed_form():
    ks = np.array([0.0, 0.25, 0.5, 0.75, 1.0, 2.0, 8.0])
    out = scaling_study(D24, J2, ks)
    # roots of z^2 + 5 z + (4 + 4 k^2): real part saturates at -5/2
    expect = (-5.0 + np.sqrt(np.maximum(0.0, 9.0 - 16.0 * ks**2))) / 2.0
    got = np.array([a for _, a in out])
    assert np.max(np.abs(got - expect)) <= 1e-10
    assert np.all(np.diff(got) <= 1e-12)  # monotone non-increasing
    assert out[0][1] == spectral_abscissa(D24)


def test_scaling_study_isotropic_flat():
    ks = np.array([0.0, 0.5, 1.0, 4.0])
    out = scaling_study(-np.eye(2), J2, ks)
    for _, a in out:
        assert abs(a + 1.0) <= 1e-12


def test_eigenvector_condition_spikes_at_defective_point():
    # at k = 3/4 the drift matrix of the scaling family is a Jordan block
    b_far = ou_drift_matrix(D24, SkewMatrix(0.25 * J2.entries))
    b_near = ou_drift_matrix(D24, SkewMatrix(0.7499 * J2.entries))
    assert eigenvector_condition(b_near) > 10.0 * eigenvector_condition(b_far)
    assert eigenvector_condition(-np.eye(2)) == pytest.approx(1.0, abs=1e-12)
