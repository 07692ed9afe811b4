"""Nonreversible perturbations of Langevin diffusions.

Tools to build overdamped Langevin models dX = (C - grad U) dt + sqrt(2) dW
whose drift carries a weighted divergence-free perturbation C, and to check
that the perturbation speeds up convergence to the Boltzmann equilibrium:
Euler-Maruyama sampling, spectral gaps of discretized generators, exact
drift-matrix spectra for Gaussian potentials, and TV-decay rate estimation.
"""

__version__ = "0.1.0"

from .diagnostics import (
    ComparisonReport,
    RateFit,
    TVCurve,
    compare,
    estimate_noise_floor,
    estimate_tv,
    fit_rate,
    rate_halfwidth,
    integrated_autocorrelation,
)
from .drift import (
    DriftField,
    SkewMatrix,
    bump_family,
    drift_skew_grad,
    drift_stream_2d,
    drift_zero,
    random_skew,
    weak_invariance_residual,
    weighted_divergence_residual,
)
from .errors import (
    ExplosionError,
    KernelMultiplicityError,
    NumericalFailure,
    RateFitError,
)
from .integrate import IntegratorConfig, SampleBatch, chain_rng, em_step, simulate_chains
from .model import (
    Potential,
    check_confinement,
    gaussian_density,
    grad_check,
    potential_double_well,
    potential_gaussian,
    potential_torus,
)
from .ou import (
    OUModel,
    covariance_at,
    eigenvector_condition,
    lyapunov_residual,
    ou_drift_matrix,
    scaling_study,
    spectral_abscissa,
    stationary_covariance,
)
from .spectrum import (
    GeneratorMatrix,
    Grid,
    SpectrumResult,
    discretize_generator,
    dirichlet_form,
    energy_identity_check,
    gaussian_box,
    spectral_gap,
)

__all__ = [
    "__version__",
    "ComparisonReport", "RateFit", "TVCurve", "compare", "estimate_noise_floor",
    "estimate_tv", "fit_rate", "integrated_autocorrelation", "rate_halfwidth",
    "DriftField", "SkewMatrix", "bump_family", "drift_skew_grad",
    "drift_stream_2d", "drift_zero", "random_skew", "weak_invariance_residual",
    "weighted_divergence_residual",
    "ExplosionError", "KernelMultiplicityError", "NumericalFailure", "RateFitError",
    "IntegratorConfig", "SampleBatch", "chain_rng", "em_step", "simulate_chains",
    "Potential", "check_confinement", "gaussian_density", "grad_check",
    "potential_double_well", "potential_gaussian", "potential_torus",
    "OUModel", "covariance_at", "eigenvector_condition", "lyapunov_residual",
    "ou_drift_matrix", "scaling_study", "spectral_abscissa", "stationary_covariance",
    "GeneratorMatrix", "Grid", "SpectrumResult", "discretize_generator",
    "dirichlet_form", "energy_identity_check", "gaussian_box", "spectral_gap",
]
