"""Locally Gaussian conditional density estimation and sampling.

The conditional density of one coordinate given fixed values of the others
is built from local correlation fits along a fixed grid: at each grid
abscissa the local correlation matrix gives Gaussian conditional moments
mu(z) and sigma2(z), and the density value is N(grid; mu, sigma2).  The
profile is normalized over the grid, represented continuously by a cubic
spline clipped at zero, and sampled by accept-reject with a uniform
proposal over the grid range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    EnvelopeFailureError,
    InvalidInputError,
    SingularConditioningError,
)
from .locallik import Bandwidth, fit_batch
from .transform import PseudoSample

GRID_LO = -4.5
GRID_HI = 4.5
GRID_SIZE = 101

#: multiplicative headroom of the accept-reject envelope over the density max
ENVELOPE_FACTOR = 1.05

MIN_SIGMA2 = 1e-4


def default_grid():
    return np.linspace(GRID_LO, GRID_HI, GRID_SIZE)


@dataclass
class ConditionalDensity:
    """One conditional density on a grid with a spline interpolant."""

    target_index: int
    conditioning_values: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    interpolant: CubicSpline
    envelope_constant: float
    normalized_ok: bool
    fallback_points: int

    def pdf(self, x):
        return np.clip(self.interpolant(x), 0.0, None)


def conditional_params(R, z, target_index=0):
    """Gaussian conditional moments of one coordinate given the others.

    Returns (mu, sigma2) with mu = R_tc R_cc^-1 z_c and sigma2 the scalar
    Schur complement 1 - R_tc R_cc^-1 R_ct.
    """
    R = np.asarray(R, dtype=float)
    z = np.asarray(z, dtype=float)
    p = R.shape[0]
    if z.size != p:
        raise InvalidInputError("z length does not match R")
    others = [j for j in range(p) if j != target_index]
    Rcc = R[np.ix_(others, others)]
    Rtc = R[target_index, others]
    try:
        w = np.linalg.solve(Rcc, z[others])
        v = np.linalg.solve(Rcc, Rtc)
    except np.linalg.LinAlgError:
        raise SingularConditioningError("conditioning block is singular")
    mu = float(Rtc @ w)
    sigma2 = float(1.0 - Rtc @ v)
    if sigma2 <= 0 or not np.isfinite(sigma2):
        raise SingularConditioningError("conditional variance is not positive")
    return mu, sigma2


def _normal_pdf(x, mu, sigma2):
    return np.exp(-0.5 * (x - mu) ** 2 / sigma2) / np.sqrt(2.0 * np.pi * sigma2)


class ConditionalProfileBatch:
    """Conditional density profiles for many conditioning rows at once.

    Fits the required pairwise local correlations in large batches: the
    target-conditioner correlations vary over (grid, row) while the
    conditioner-conditioner correlations vary over rows only.
    """

    def __init__(self, sample_z, target_index, cond_indices, cond_values,
                 bandwidth: Bandwidth, grid=None):
        sample_z = np.asarray(sample_z, dtype=float)
        cond_values = np.atleast_2d(np.asarray(cond_values, dtype=float))
        if cond_values.shape[1] != len(cond_indices):
            raise InvalidInputError("conditioning values do not match indices")
        self.grid = default_grid() if grid is None else np.asarray(grid, float)
        G = self.grid.size
        n_rows = cond_values.shape[0]
        q = len(cond_indices)
        self.n_rows = n_rows
        self.target_index = target_index
        self.cond_values = cond_values

        fallback = np.zeros((n_rows, G), dtype=bool)

        # target-conditioner correlations: one batch of (row, grid) points
        # per conditioner
        rho_tc = np.empty((q, n_rows, G))
        for a, ci in enumerate(cond_indices):
            pts = np.empty((n_rows * G, 2))
            pts[:, 0] = np.repeat(self.grid[None, :], n_rows, axis=0).ravel()
            pts[:, 1] = np.repeat(cond_values[:, a], G)
            cols = sample_z[:, (target_index, ci)]
            r, conv, _, _, degen = fit_batch(pts, cols, bandwidth)
            rho_tc[a] = r[:, 0].reshape(n_rows, G)
            fallback |= (~conv | degen).reshape(n_rows, G)

        mu = np.zeros((n_rows, G))
        sigma2 = np.ones((n_rows, G))
        if q == 1:
            r = rho_tc[0]
            mu = r * cond_values[:, 0][:, None]
            sigma2 = 1.0 - r ** 2
        else:
            # conditioner-conditioner correlations depend on rows only
            Rcc = np.broadcast_to(np.eye(q), (n_rows, q, q)).copy()
            for a in range(q):
                for bq in range(a + 1, q):
                    pts = cond_values[:, (a, bq)]
                    cols = sample_z[:, (cond_indices[a], cond_indices[bq])]
                    r, conv, _, _, degen = fit_batch(pts, cols, bandwidth)
                    Rcc[:, a, bq] = r[:, 0]
                    Rcc[:, bq, a] = r[:, 0]
                    fallback |= (~conv | degen)[:, None]
            # per-row inverse of the small conditioning block
            Rcc_inv = np.linalg.inv(Rcc)
            w = np.einsum("rab,rb->ra", Rcc_inv, cond_values)
            for g in range(G):
                tc = rho_tc[:, :, g].T  # (n_rows, q)
                mu[:, g] = np.einsum("ra,ra->r", tc, w)
                sigma2[:, g] = 1.0 - np.einsum(
                    "ra,rab,rb->r", tc, Rcc_inv, tc
                )
        sigma2 = np.clip(sigma2, MIN_SIGMA2, None)

        vals = _normal_pdf(self.grid[None, :], mu, sigma2)
        area = np.trapezoid(vals, self.grid, axis=1)
        self.normalized_ok = np.abs(area - 1.0) <= 0.1
        vals = vals / area[:, None]
        self.values = vals
        self.fallback_counts = fallback.sum(axis=1)
        self.envelopes = ENVELOPE_FACTOR * vals.max(axis=1)
        # one spline construction covers every row
        spline = CubicSpline(self.grid, vals.T, axis=0)
        self._coeffs = np.moveaxis(spline.c, 2, 0)  # (n_rows, 4, G-1)

    def _eval_rows(self, rows, x):
        """Cubic spline values of each row's density at its own abscissa."""
        idx = np.clip(np.searchsorted(self.grid, x) - 1, 0, self.grid.size - 2)
        t = x - self.grid[idx]
        c = self._coeffs[rows, :, idx]  # (len(rows), 4)
        val = ((c[:, 0] * t + c[:, 1]) * t + c[:, 2]) * t + c[:, 3]
        return np.clip(val, 0.0, None)

    def density(self, row):
        """Materialize one row as a standalone ConditionalDensity."""
        interp = CubicSpline(self.grid, self.values[row])
        return ConditionalDensity(
            target_index=self.target_index,
            conditioning_values=self.cond_values[row],
            grid=self.grid,
            values=self.values[row],
            interpolant=interp,
            envelope_constant=float(self.envelopes[row]),
            normalized_ok=bool(self.normalized_ok[row]),
            fallback_points=int(self.fallback_counts[row]),
        )

    def sample_rows(self, rng, envelope_scale=1.0, max_rounds=10_000):
        """One accept-reject draw per row, vectorized across pending rows."""
        lo, hi = self.grid[0], self.grid[-1]
        env = self.envelopes * envelope_scale
        out = np.empty(self.n_rows)
        pending = np.arange(self.n_rows)
        proposals = 0
        for _ in range(max_rounds):
            m = pending.size
            x = rng.uniform(lo, hi, size=m)
            u = rng.uniform(0.0, 1.0, size=m)
            f = self._eval_rows(pending, x)
            accept = u * env[pending] <= f
            out[pending[accept]] = x[accept]
            proposals += m
            pending = pending[~accept]
            if pending.size == 0:
                return out
            if proposals > 1000 and (self.n_rows - pending.size) / proposals < 1e-3:
                break
        raise EnvelopeFailureError(
            f"acceptance rate below 1e-3 after {proposals} proposals"
        )


def estimate_conditional_density(sample: PseudoSample, target, conditioners,
                                 cond_values, bandwidth, grid=None):
    """Conditional density of one column given fixed z-scale values of others.

    target and conditioners are column indices; cond_values are z-scale
    coordinates of the conditioners.
    """
    if len(conditioners) < 1:
        raise InvalidInputError("at least one conditioner required")
    if sample.n < 50:
        raise InvalidInputError("need at least 50 observations")
    batch = ConditionalProfileBatch(
        sample.z, target, list(conditioners),
        np.asarray(cond_values, dtype=float)[None, :], bandwidth, grid=grid,
    )
    return batch.density(0)


def sample_accept_reject(density: ConditionalDensity, count, rng):
    """iid draws from an interpolated density via uniform-proposal
    accept-reject; deterministic given the rng stream."""
    if density.envelope_constant < density.values.max():
        raise InvalidInputError("envelope constant below the density maximum")
    lo, hi = density.grid[0], density.grid[-1]
    out = np.empty(count)
    filled = 0
    proposals = 0
    while filled < count:
        m = max(2 * (count - filled), 64)
        x = rng.uniform(lo, hi, size=m)
        u = rng.uniform(0.0, 1.0, size=m)
        f = density.pdf(x)
        acc = x[u * density.envelope_constant <= f]
        take = min(acc.size, count - filled)
        out[filled:filled + take] = acc[:take]
        filled += take
        proposals += m
        if proposals > 10_000 and filled / proposals < 1e-3:
            raise EnvelopeFailureError(
                f"acceptance rate below 1e-3 after {proposals} proposals"
            )
    return out
