"""Numerical laboratory for dispersal models: covariance algebra, stochastic
field simulation, particle systems with deposition, the point processes they
generate, and pseudo-likelihood parameter estimation.

Modules
-------
special       in-repo special functions (gamma, Bessel K/J/Y, Struve, Si/Ci)
covariance    spectral symbols, closed-form covariances, transform inversion
fields        explicit finite-difference / spectral SPDE field simulation
particles     drift-diffusion-death particle systems (stable increments)
pointprocess  Poisson sampling, window counts, conditional laws, likelihoods
estimation    pseudo-likelihood fits and replicated simulation studies
cli           config-driven command line producing CSV artifacts
"""

__version__ = "0.1.0"

from .covariance import (
    CovarianceSpec,
    SpectralPoint,
    cov_by_transform,
    cov_exp_kernel_1d,
    frac_reaction_cov_1d,
    frac_reaction_cov_2d,
    generalized_matern_cov,
    matern_cov,
    practical_range,
    spectral_density,
    symbol,
)
from .estimation import (
    Bounds,
    ObservationSet,
    StudyConfig,
    fit,
    mc_study,
    pseudo_loglik_counts,
    pseudo_loglik_locations,
    simulate_observations,
)
from .fields import Grid, GridField, SimConfig, simulate
from .particles import (
    LevyParams,
    ModelParams,
    ParticleSystem,
    analytic_intensity,
    exact_gaussian_transition,
    stable_increment,
)
from .pointprocess import (
    IntensityFn,
    PointPattern,
    Window,
    conditional_intensity,
    conditional_sampler,
    intensity_measure,
    sample_poisson,
)

__all__ = [
    "__version__",
    "CovarianceSpec",
    "SpectralPoint",
    "cov_by_transform",
    "cov_exp_kernel_1d",
    "frac_reaction_cov_1d",
    "frac_reaction_cov_2d",
    "generalized_matern_cov",
    "matern_cov",
    "practical_range",
    "spectral_density",
    "symbol",
    "Bounds",
    "ObservationSet",
    "StudyConfig",
    "fit",
    "mc_study",
    "pseudo_loglik_counts",
    "pseudo_loglik_locations",
    "simulate_observations",
    "Grid",
    "GridField",
    "SimConfig",
    "simulate",
    "LevyParams",
    "ModelParams",
    "ParticleSystem",
    "analytic_intensity",
    "exact_gaussian_transition",
    "stable_increment",
    "IntensityFn",
    "PointPattern",
    "Window",
    "conditional_intensity",
    "conditional_sampler",
    "intensity_measure",
    "sample_poisson",
]
