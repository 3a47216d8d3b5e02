"""Bootstrap test for conditional independence and a Granger front end.

The statistic aggregates the local partial correlation over the sample,
T = (1/n) sum over observations in S of h(alpha(Z_i)).  Its null
distribution is approximated by resampling Z_1 and Z_2 from locally
Gaussian conditional densities given the observed conditioning rows, which
imposes conditional independence while preserving the marginal-conditional
structure, and recomputing the statistic on each replicate through the
identical pipeline (including the rank transform).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conddens import ConditionalProfileBatch
from .errors import (
    EmptyRegionError,
    EnvelopeFailureError,
    InvalidInputError,
    NumericalError,
)
from .loccor import estimate_field
from .locallik import plugin_bandwidth
from .partialcorr import lgpc_batch
from .transform import to_pseudo_normal

_H_FUNCTIONS = {
    "square": np.square,
    "abs": np.abs,
    "identity": lambda a: a,
}


@dataclass(frozen=True)
class TestConfig:
    """Knobs of one conditional-independence test run."""

    h_function: str = "square"
    region: Optional[tuple] = None
    B: int = 500
    c: float = 1.75
    method: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.h_function not in _H_FUNCTIONS:
            raise InvalidInputError(f"unknown h function '{self.h_function}'")
        if self.B < 1:
            raise InvalidInputError("B must be at least 1")
        if self.c <= 0:
            raise InvalidInputError("c must be positive")
        if self.method not in ("auto", "trivariate", "pairwise"):
            raise InvalidInputError(f"unknown method '{self.method}'")
        if self.region is not None:
            lo, hi = self.region
            if not (0 <= lo < hi <= 1):
                raise InvalidInputError("region quantiles must satisfy 0 <= lo < hi <= 1")


@dataclass
class TestResult:
    """Observed statistic, bootstrap replicates and p-value."""

    t_observed: float
    t_replicates: np.ndarray
    p_value: float
    config: TestConfig
    n_points_used: int
    n: int
    method: str
    bandwidth: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "t_observed": self.t_observed,
            "p_value": self.p_value,
            "B": int(self.t_replicates.size),
            "c": self.config.c,
            "method": self.method,
            "h": self.config.h_function,
            "region": list(self.config.region) if self.config.region else None,
            "seed": self.config.seed,
            "n": self.n,
            "bandwidth": self.bandwidth,
            "n_points_used": self.n_points_used,
            "diagnostics": self.diagnostics,
            "replicates": [float(t) for t in self.t_replicates],
        }


def _resolve_method(p, method):
    if method == "auto":
        return "trivariate" if p == 3 else "pairwise"
    if method == "trivariate" and p != 3:
        raise InvalidInputError("trivariate method requires exactly 3 columns")
    return method


def _region_mask(z, region):
    """Observations whose every coordinate lies in the quantile box."""
    if region is None:
        return np.ones(z.shape[0], dtype=bool)
    lo, hi = region
    mask = np.ones(z.shape[0], dtype=bool)
    for j in range(z.shape[1]):
        ql, qh = np.quantile(z[:, j], [lo, hi])
        mask &= (z[:, j] >= ql) & (z[:, j] <= qh)
    return mask


def test_statistic(sample, config: TestConfig, bandwidth, method=None):
    """T = (1/n) sum over observations in the region of h(alpha(Z_i))."""
    method = _resolve_method(sample.p, config.method if method is None else method)
    t, _, n_used = _statistic_on_z(sample.z, config, bandwidth, method)
    return t


def _statistic_on_z(z, config, bandwidth, method):
    mask = _region_mask(z, config.region)
    if not np.any(mask):
        raise EmptyRegionError("no observations inside the requested region")
    pts = z[mask]

    class _Z:
        pass

    sample = _Z()
    sample.z = z
    sample.p = z.shape[1]
    field_ = estimate_field(sample, pts, method, bandwidth)
    h = _H_FUNCTIONS[config.h_function]
    alphas = lgpc_batch(field_.rho_matrices)
    t = float(np.sum(h(alphas)) / z.shape[0])
    fallbacks = int(np.sum(field_.fell_back))
    return t, fallbacks, int(mask.sum())


def bootstrap_null(sample, config: TestConfig, bandwidth, method,
                   density_bandwidth=None, seed_sequence=None):
    """Bootstrap replicate statistics under conditional independence.

    Returns (replicates, n_failed).  Replicates whose accept-reject
    sampling fails even after one retry with a doubled envelope are
    dropped; more than 5 percent failures aborts.
    """
    n, p = sample.z.shape
    cond = list(range(2, p))
    if density_bandwidth is None:
        density_bandwidth = plugin_bandwidth(n, config.c, "pairwise")
    z3 = sample.z[:, 2:]
    profile1 = ConditionalProfileBatch(
        sample.z, 0, cond, z3, density_bandwidth
    )
    profile2 = ConditionalProfileBatch(
        sample.z, 1, cond, z3, density_bandwidth
    )

    if seed_sequence is None:
        seed_sequence = np.random.SeedSequence(config.seed)
    children = seed_sequence.spawn(config.B)
    reps = []
    failed = 0
    for child in children:
        rng = np.random.default_rng(child)
        try:
            z1_star = profile1.sample_rows(rng)
            z2_star = profile2.sample_rows(rng)
        except EnvelopeFailureError:
            try:
                rng = np.random.default_rng(child.spawn(1)[0])
                z1_star = profile1.sample_rows(rng, envelope_scale=2.0)
                z2_star = profile2.sample_rows(rng, envelope_scale=2.0)
            except EnvelopeFailureError:
                failed += 1
                continue
        x_star = np.column_stack([z1_star, z2_star, z3])
        # identical pipeline: re-rank the replicate before the statistic
        z_star = to_pseudo_normal(x_star).z
        t, _, _ = _statistic_on_z(z_star, config, bandwidth, method)
        reps.append(t)
    if failed > 0.05 * config.B:
        raise NumericalError(
            f"{failed} of {config.B} bootstrap replicates failed resampling"
        )
    return np.array(reps), failed


def ci_test(x_data, config: TestConfig) -> TestResult:
    """Test H0: column 1 independent of column 2 given the remaining columns."""
    x_data = np.asarray(x_data, dtype=float)
    if x_data.ndim != 2 or x_data.shape[1] < 3:
        raise InvalidInputError("need an n-by-p matrix with p >= 3")
    n, p = x_data.shape
    if n < 50:
        raise InvalidInputError("need at least 50 observations")
    sample = to_pseudo_normal(x_data)
    method = _resolve_method(p, config.method)
    mode = "trivariate" if method == "trivariate" else "pairwise"
    bandwidth = plugin_bandwidth(n, config.c, mode)

    t_obs, fallbacks, n_used = _statistic_on_z(sample.z, config, bandwidth, method)
    reps, failed = bootstrap_null(sample, config, bandwidth, method)
    p_value = (1.0 + np.sum(reps >= t_obs)) / (reps.size + 1.0)
    return TestResult(
        t_observed=t_obs,
        t_replicates=reps,
        p_value=float(p_value),
        config=config,
        n_points_used=n_used,
        n=n,
        method=method,
        bandwidth=bandwidth.scalar(),
        diagnostics={"observed_fallback_points": fallbacks,
                     "failed_replicates": failed},
    )


def granger_test(cause_series, effect_series, config: TestConfig) -> TestResult:
    """Test H0: effect_t independent of cause_{t-1} given effect_{t-1}."""
    cause = np.asarray(cause_series, dtype=float).ravel()
    effect = np.asarray(effect_series, dtype=float).ravel()
    if cause.size != effect.size:
        raise InvalidInputError("series lengths are misaligned")
    if cause.size < 51:
        raise InvalidInputError("need series of length at least 51")
    triples = np.column_stack([effect[1:], cause[:-1], effect[:-1]])
    if config.method == "auto":
        config = TestConfig(
            h_function=config.h_function, region=config.region, B=config.B,
            c=config.c, method="trivariate", seed=config.seed,
        )
    return ci_test(triples, config)
