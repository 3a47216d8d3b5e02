"""Local correlation matrix fields.

Assembles full p-by-p local correlation matrices R(z) over sets of
evaluation points, either by a single joint 3-parameter fit (p = 3 only)
or by independent 1-parameter fits per variable pair, where the (j, k)
entry depends on the coordinates (z_j, z_k) alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNeighborhoodError, InvalidInputError
from .locallik import RHO_BOUND, Bandwidth, fit_batch, _pair_list
from .transform import PseudoSample, z_to_x_point

#: eigenvalue floor used when repairing an indefinite pairwise assembly
EIG_FLOOR = 1e-4


@dataclass(frozen=True)
class LocalCorrelationField:
    """Local correlation matrices and fit diagnostics over evaluation points."""

    points: np.ndarray
    method: str
    rho_matrices: np.ndarray
    converged: np.ndarray
    fell_back: np.ndarray
    repaired: np.ndarray
    bandwidth: Bandwidth
    pair_index: tuple

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def p(self):
        return self.points.shape[1]

    def rho_vectors(self):
        """Correlations as a (n_points, p(p-1)/2) array in pair_index order."""
        return np.stack(
            [self.rho_matrices[:, j, k] for j, k in self.pair_index], axis=1
        )


def _assemble(rho, p, pairs):
    P = rho.shape[0]
    R = np.broadcast_to(np.eye(p), (P, p, p)).copy()
    for k, (j, l) in enumerate(pairs):
        R[:, j, l] = rho[:, k]
        R[:, l, j] = rho[:, k]
    return R


def _repair_pd(R):
    """Eigenvalue-clip indefinite matrices and rescale to unit diagonal.

    Returns (R_fixed, repaired_mask).
    """
    w = np.linalg.eigvalsh(R)
    bad = w[:, 0] < EIG_FLOOR
    if not np.any(bad):
        return R, bad
    R = R.copy()
    for i in np.where(bad)[0]:
        w_i, V = np.linalg.eigh(R[i])
        w_i = np.clip(w_i, EIG_FLOOR, None)
        M = (V * w_i) @ V.T
        d = np.sqrt(np.diag(M))
        M = M / np.outer(d, d)
        np.fill_diagonal(M, 1.0)
        R[i] = np.clip(M, -RHO_BOUND, RHO_BOUND)
        np.fill_diagonal(R[i], 1.0)
    return R, bad


def _field_trivariate(points, sample_z, bandwidth):
    points = np.asarray(points, dtype=float)
    if sample_z.shape[1] != 3 or points.shape[1] != 3:
        raise InvalidInputError("trivariate method requires exactly 3 columns")
    rho, conv, _, _, degen = fit_batch(points, sample_z, bandwidth)
    pairs = tuple(_pair_list(3))
    R = _assemble(rho, 3, pairs)
    return R, conv, (~conv) | degen, np.zeros(points.shape[0], dtype=bool), pairs


def _field_pairwise(points, sample_z, bandwidth):
    points = np.asarray(points, dtype=float)
    p = sample_z.shape[1]
    if p < 3:
        raise InvalidInputError("pairwise method requires at least 3 columns")
    if points.shape[1] != p:
        raise InvalidInputError("evaluation points do not match sample dimension")
    pairs = tuple(_pair_list(p))
    P = points.shape[0]
    rho = np.empty((P, len(pairs)))
    conv = np.ones(P, dtype=bool)
    fell = np.zeros(P, dtype=bool)
    for k, (j, l) in enumerate(pairs):
        # entry (j, l) is a function of coordinates (z_j, z_l) only, so
        # duplicate 2-d points collapse to unique fits
        pts2 = points[:, (j, l)]
        uniq, inverse = np.unique(pts2, axis=0, return_inverse=True)
        r, c, _, _, d = fit_batch(uniq, sample_z[:, (j, l)], bandwidth)
        rho[:, k] = r[inverse, 0]
        conv &= c[inverse]
        fell |= (~c | d)[inverse]
    R = _assemble(rho, p, pairs)
    R, repaired = _repair_pd(R)
    return R, conv, fell, repaired, pairs


def estimate_R_trivariate(sample: PseudoSample, z_eval, bandwidth):
    """Joint 3-parameter local fit at one point; returns (R, diagnostics)."""
    z_eval = np.asarray(z_eval, dtype=float)
    field = estimate_field(sample, z_eval[None, :], "trivariate", bandwidth)
    diag = {
        "converged": bool(field.converged[0]),
        "fell_back": bool(field.fell_back[0]),
    }
    return field.rho_matrices[0], diag


def estimate_R_pairwise(sample: PseudoSample, z_eval, bandwidth):
    """Per-pair 1-parameter local fits at one point; returns (R, diagnostics)."""
    z_eval = np.asarray(z_eval, dtype=float)
    field = estimate_field(sample, z_eval[None, :], "pairwise", bandwidth)
    diag = {
        "converged": bool(field.converged[0]),
        "fell_back": bool(field.fell_back[0]),
        "repaired": bool(field.repaired[0]),
    }
    return field.rho_matrices[0], diag


def default_grid(sample: PseudoSample, levels=None):
    """Tensor grid of marginal z-quantiles at levels 0.1, ..., 0.9."""
    if levels is None:
        levels = np.arange(0.1, 0.91, 0.1)
    axes = [np.quantile(sample.z[:, j], levels) for j in range(sample.p)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def estimate_field(sample: PseudoSample, grid, method, bandwidth):
    """Estimate local correlation matrices at every grid point."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[None, :]
    if grid.size == 0:
        raise InvalidInputError("evaluation grid is empty")
    if grid.shape[1] != sample.p:
        raise InvalidInputError("grid dimension does not match sample")
    if method == "trivariate":
        R, conv, fell, repaired, pairs = _field_trivariate(grid, sample.z, bandwidth)
    elif method == "pairwise":
        R, conv, fell, repaired, pairs = _field_pairwise(grid, sample.z, bandwidth)
    else:
        raise InvalidInputError(f"unknown method '{method}'")
    return LocalCorrelationField(
        points=grid,
        method=method,
        rho_matrices=R,
        converged=conv,
        fell_back=fell,
        repaired=repaired,
        bandwidth=bandwidth,
        pair_index=pairs,
    )


def export_field(field: LocalCorrelationField, sample: PseudoSample):
    """Render a field as delimited text: z-coords, x-coords, correlations, flags."""
    p = field.p
    header = (
        [f"z{j + 1}" for j in range(p)]
        + [f"x{j + 1}" for j in range(p)]
        + [f"rho{j + 1}{k + 1}" for j, k in field.pair_index]
        + ["converged", "fell_back", "repaired"]
    )
    lines = [",".join(header)]
    rho = field.rho_vectors()
    for i in range(field.n_points):
        x, _ = z_to_x_point(sample.margins, field.points[i])
        row = (
            [f"{v:.15g}" for v in field.points[i]]
            + [f"{v:.15g}" for v in x]
            + [f"{v:.15g}" for v in rho[i]]
            + [
                str(int(field.converged[i])),
                str(int(field.fell_back[i])),
                str(int(field.repaired[i])),
            ]
        )
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
