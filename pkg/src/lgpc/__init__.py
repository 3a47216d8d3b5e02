"""Local Gaussian partial correlation: estimation, dependence maps, and a
bootstrap test for conditional independence."""

from .citest import TestConfig, TestResult, bootstrap_null, ci_test, granger_test, test_statistic
from .conddens import ConditionalDensity, estimate_conditional_density, sample_accept_reject
from .dgp import BenchmarkReport, DgpSpec, benchmark, generate
from .errors import (
    DegenerateNeighborhoodError,
    EmptyRegionError,
    EnvelopeFailureError,
    InvalidInputError,
    LgpcError,
    NumericalError,
    SingularConditioningError,
)
from .locallik import Bandwidth, LocalFit, fit_local, kernel_weight, local_likelihood_objective, plugin_bandwidth
from .loccor import LocalCorrelationField, estimate_R_pairwise, estimate_R_trivariate, estimate_field
from .partialcorr import (
    PartialCorrelationEstimate,
    confidence_band,
    estimate_partial,
    lgpc_batch,
    lgpc_from_R,
    lgpc_gradient,
    lgpc_scalar,
    partial_cov,
    variance_pairwise,
    variance_trivariate,
)
from .transform import MarginTable, PseudoSample, empirical_cdf, to_pseudo_normal, x_to_z_point, z_to_x_point

__version__ = "0.1.0"

__all__ = [
    "Bandwidth",
    "BenchmarkReport",
    "ConditionalDensity",
    "DegenerateNeighborhoodError",
    "DgpSpec",
    "EmptyRegionError",
    "EnvelopeFailureError",
    "InvalidInputError",
    "LgpcError",
    "LocalCorrelationField",
    "LocalFit",
    "MarginTable",
    "NumericalError",
    "PartialCorrelationEstimate",
    "PseudoSample",
    "SingularConditioningError",
    "TestConfig",
    "TestResult",
    "benchmark",
    "bootstrap_null",
    "ci_test",
    "confidence_band",
    "empirical_cdf",
    "estimate_R_pairwise",
    "estimate_R_trivariate",
    "estimate_conditional_density",
    "estimate_field",
    "estimate_partial",
    "fit_local",
    "generate",
    "granger_test",
    "kernel_weight",
    "lgpc_batch",
    "lgpc_from_R",
    "lgpc_gradient",
    "lgpc_scalar",
    "local_likelihood_objective",
    "partial_cov",
    "plugin_bandwidth",
    "sample_accept_reject",
    "test_statistic",
    "to_pseudo_normal",
    "variance_pairwise",
    "variance_trivariate",
    "x_to_z_point",
    "z_to_x_point",
]
