"""Nonparametric inference for the diffusivity of a reflected diffusion.

Spectral forward solver for the Neumann generator, exact low-frequency data
simulation, projection estimation of the transition operator, pCN posterior
sampling and numerical checks of stability and spectral-geometry conditions.
"""

from .errors import (CacheError, ConfigurationError, DataError, KernelQualityError,
                     NumericalError, ReflectDiffError)
from .geometry import Domain, Grid, SubdomainSpec, build_cutoff, build_grid
from .spectral import (DiffusivityField, SpectralDecomposition, decompose, heat_kernel,
                       laplacian_basis, operator_matrix_norm, transition_apply)
from .simulate import ObservationRecord, sample_observations, sample_path_euler
from .estimate import projection_estimator, rate_experiment
from .bayes import PriorSpec, link, run_chain
from .conditions import certify, check_sunnyside, first_eigenblock
from .metrics import hs_distance, kl_divergence, stability_ratios

__version__ = "0.1.0"

__all__ = [
    "CacheError", "ConfigurationError", "DataError", "KernelQualityError", "NumericalError",
    "ReflectDiffError", "Domain", "Grid", "SubdomainSpec", "build_cutoff", "build_grid",
    "DiffusivityField", "SpectralDecomposition", "decompose", "heat_kernel", "laplacian_basis",
    "operator_matrix_norm", "transition_apply", "ObservationRecord", "sample_observations",
    "sample_path_euler", "projection_estimator", "rate_experiment", "PriorSpec", "link",
    "run_chain", "certify", "check_sunnyside", "first_eigenblock", "hs_distance",
    "kl_divergence", "stability_ratios",
]
