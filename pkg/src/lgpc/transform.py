"""Rank-based marginal transformation between the observation scale and the
marginally standard normal scale.

Each column is mapped through its empirical distribution function using the
rank/(n+1) convention and then through the standard normal quantile function,
producing normal-score pseudo-observations.  The per-column margin tables are
kept so that points can be moved back and forth between the two scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InvalidInputError


@dataclass(frozen=True)
class MarginTable:
    """Empirical margin of one variable: sorted sample values plus lookups.

    Immutable after construction; all lookups are read-only.
    """

    sorted_values: np.ndarray
    n: int

    def __post_init__(self):
        values = np.asarray(self.sorted_values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise InvalidInputError("margin requires at least 2 values")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("margin values must be finite")
        if np.any(np.diff(values) < 0):
            raise InvalidInputError("margin values must be sorted ascending")
        object.__setattr__(self, "sorted_values", values)
        object.__setattr__(self, "n", int(values.size))

    def cdf(self, query):
        """Empirical cdf value rank/(n+1), clamped into [1/(n+1), n/(n+1)]."""
        q = np.asarray(query, dtype=float)
        if not np.all(np.isfinite(q)):
            raise InvalidInputError("cdf query must be finite")
        rank = np.searchsorted(self.sorted_values, q, side="right")
        p = rank / (self.n + 1.0)
        return np.clip(p, 1.0 / (self.n + 1.0), self.n / (self.n + 1.0))

    def quantile(self, prob):
        """Inverse lookup by linear interpolation between order statistics.

        Probabilities outside [1/(n+1), n/(n+1)] are clamped to the extreme
        sample values; the second return value flags where that happened.
        """
        p = np.asarray(prob, dtype=float)
        grid = np.arange(1, self.n + 1) / (self.n + 1.0)
        clamped = (p < grid[0]) | (p > grid[-1])
        x = np.interp(p, grid, self.sorted_values)
        return x, clamped


@dataclass(frozen=True)
class PseudoSample:
    """Normal-score pseudo-observations with their invertible margins."""

    z: np.ndarray
    margins: tuple
    column_names: tuple = field(default=())

    @property
    def n(self):
        return self.z.shape[0]

    @property
    def p(self):
        return self.z.shape[1]


def empirical_cdf(sample_column, query):
    """rank(query)/(n+1) where rank counts sample entries <= query."""
    col = np.asarray(sample_column, dtype=float)
    if col.ndim != 1 or col.size == 0:
        raise InvalidInputError("sample column must be a non-empty 1-d array")
    if not np.all(np.isfinite(col)):
        raise InvalidInputError("sample column must be finite")
    if not np.all(np.isfinite(np.asarray(query, dtype=float))):
        raise InvalidInputError("query must be finite")
    rank = np.count_nonzero(col <= query)
    return rank / (col.size + 1.0)


def to_pseudo_normal(x, column_names=None):
    """Transform an n-by-p data matrix to normal-score pseudo-observations.

    z[i, j] = ndtri(rank_ij / (n+1)) with ranks counting ties weakly (<=),
    so tied values share a rank and the map is deterministic.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InvalidInputError("x must be a 2-d matrix")
    n, p = x.shape
    if n < 2:
        raise InvalidInputError("need at least 2 rows")
    if column_names is None:
        column_names = tuple(f"x{j + 1}" for j in range(p))
    else:
        column_names = tuple(column_names)
        if len(column_names) != p:
            raise InvalidInputError("column_names length does not match data")
    for j in range(p):
        if not np.all(np.isfinite(x[:, j])):
            raise InvalidInputError(
                f"column '{column_names[j]}' contains non-finite values"
            )

    z = np.empty_like(x)
    margins = []
    for j in range(p):
        col = x[:, j]
        srt = np.sort(col)
        ranks = np.searchsorted(srt, col, side="right")
        z[:, j] = ndtri(ranks / (n + 1.0))
        margins.append(MarginTable(srt, n))
    return PseudoSample(z=z, margins=tuple(margins), column_names=column_names)


def x_to_z_point(margins, x_point):
    """Map a point from the observation scale to the z-scale."""
    x_point = np.asarray(x_point, dtype=float)
    if x_point.shape != (len(margins),):
        raise InvalidInputError("x_point dimension does not match margins")
    return np.array([ndtri(m.cdf(v)) for m, v in zip(margins, x_point)])


def z_to_x_point(margins, z_point):
    """Map a z-scale point back to the observation scale.

    Returns (x_point, clamped_flags); coordinates outside the invertible
    range of a margin are clamped to the extreme sample values and flagged.
    """
    z_point = np.asarray(z_point, dtype=float)
    if z_point.shape != (len(margins),):
        raise InvalidInputError("z_point dimension does not match margins")
    xs = np.empty(len(margins))
    flags = np.zeros(len(margins), dtype=bool)
    for j, (m, zv) in enumerate(zip(margins, z_point)):
        xs[j], flags[j] = m.quantile(ndtr(zv))
    return xs, flags
