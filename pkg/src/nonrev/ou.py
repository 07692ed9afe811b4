"""Closed-form analysis of the Gaussian (Ornstein-Uhlenbeck) case.

For the Gaussian equilibrium with energy U(x) = -x.Dx/2 and perturbation
C = S grad U = -S D x, the dynamics is the linear diffusion
dX = (I + S) D X dt + sqrt(2) dW with drift matrix B = (I + S) D.  Its
stationary covariance is -inv(D) regardless of S, and the convergence rate
is controlled by the spectral abscissa of B (the largest real part of its
eigenvalues).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .drift import SkewMatrix
from .errors import NumericalFailure

Array = np.ndarray


def _check_gaussian_matrix(D: Array) -> Array:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"D must be square, got shape {D.shape}")
    asym = np.max(np.abs(D - D.T))
    if asym > 1e-12:
        raise ValueError(f"D must be symmetric: max |D - D^T| = {asym:.3e}")
    top = np.linalg.eigvalsh(D).max()
    if top >= 0:
        raise ValueError(f"D must be negative definite: offending eigenvalue {top:.6g}")
    return 0.5 * (D + D.T)


@dataclass(frozen=True)
class OUModel:
    """Gaussian model data: D, the skew perturbation S, and B = (I + S) D."""

    D: Array
    S: SkewMatrix

    def __post_init__(self):
        D = _check_gaussian_matrix(self.D)
        if self.S.dim != D.shape[0]:
            raise ValueError(f"S dim {self.S.dim} != D dim {D.shape[0]}")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)

    @property
    def dim(self) -> int:
        return self.D.shape[0]

    @property
    def drift_matrix(self) -> Array:
        return ou_drift_matrix(self.D, self.S)

    @property
    def stationary_covariance(self) -> Array:
        return stationary_covariance(self.D)


def ou_drift_matrix(D: Array, S: SkewMatrix) -> Array:
    """B = D + S D, the linear drift of the perturbed Gaussian dynamics."""
    D = _check_gaussian_matrix(D)
    if S.dim != D.shape[0]:
        raise ValueError(f"S dim {S.dim} != D dim {D.shape[0]}")
    return D + S.entries @ D


def spectral_abscissa(B: Array) -> float:
    """Largest real part over the eigenvalues of B."""
    B = np.asarray(B, dtype=float)
    try:
        eigs = np.linalg.eigvals(B)
    except np.linalg.LinAlgError as e:
        raise NumericalFailure(f"eigenvalue computation failed: {e}") from e
    return float(eigs.real.max())


def eigenvector_condition(B: Array) -> float:
    """Condition number of the eigenvector matrix of B.

    Large values flag strong non-normality: the spectral abscissa then says
    nothing about transient growth, only about the asymptotic rate.
    """
    B = np.asarray(B, dtype=float)
    _, vecs = np.linalg.eig(B)
    return float(np.linalg.cond(vecs))


def stationary_covariance(D: Array) -> Array:
    """-inv(D), the stationary covariance for every admissible S."""
    D = _check_gaussian_matrix(D)
    return -np.linalg.inv(D)


def lyapunov_residual(B: Array, sigma: Array) -> float:
    """Entrywise residual of the stationarity identity B Sigma + Sigma B^T + 2I = 0."""
    B = np.asarray(B, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    res = B @ sigma + sigma @ B.T + 2.0 * np.eye(B.shape[0])
    return float(np.max(np.abs(res)))


def covariance_at(B: Array, sigma0: Array, t: float) -> Array:
    """Covariance of the linear diffusion at time t from initial covariance sigma0.

    Closed form: Sigma(t) = exp(Bt) (Sigma0 - Sigma_inf) exp(B^T t) + Sigma_inf
    with Sigma_inf solving B Sigma + Sigma B^T + 2I = 0.
    """
    B = np.asarray(B, dtype=float)
    sigma0 = np.asarray(sigma0, dtype=float)
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if np.max(np.abs(sigma0 - sigma0.T)) > 1e-10:
        raise ValueError("sigma0 must be symmetric")
    if np.linalg.eigvalsh(0.5 * (sigma0 + sigma0.T)).min() < -1e-10:
        raise ValueError("sigma0 must be positive semidefinite")
    sigma_inf = scipy.linalg.solve_continuous_lyapunov(B, -2.0 * np.eye(B.shape[0]))
    e = scipy.linalg.expm(B * t)
    sigma = e @ (sigma0 - sigma_inf) @ e.T + sigma_inf
    return 0.5 * (sigma + sigma.T)


def scaling_study(D: Array, S: SkewMatrix, ks: Array) -> list[tuple[float, float]]:
    """Spectral abscissa of (I + k S) D along a scaling of the perturbation.

    Returns (k, abscissa) pairs.  k = 0 recovers the reversible abscissa
    max eig(D); the abscissa is non-increasing at small k but need not be
    monotone for every family.
    """
    D = _check_gaussian_matrix(D)
    ks = np.asarray(ks, dtype=float)
    if ks.ndim != 1 or ks.size == 0:
        raise ValueError("ks must be a non-empty 1-d list of scalings")
    if np.any(ks < 0) or np.any(np.diff(ks) < 0):
        raise ValueError("ks must be non-negative and sorted ascending")
    out = []
    for k in ks:
        out.append((float(k), spectral_abscissa(D + k * (S.entries @ D))))
    return out
