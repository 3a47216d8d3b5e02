"""Local partial correlation from a local correlation matrix.

Given a local correlation matrix R(z), the local partial covariance of the
first two variables given the rest is the Schur complement

    S(z) = R_11 - R_12 R_22^-1 R_21   (2x2),

and the local partial correlation is alpha(z) = S_12 / sqrt(S_11 S_22).
The gradient of alpha with respect to the correlation parameters feeds the
delta-method standard errors; variances of the underlying correlation
estimates come from the sandwich form of the local likelihood score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .errors import InvalidInputError, SingularConditioningError
from .locallik import _BatchProblem, _pair_list

#: integral of the squared bivariate standard normal kernel
INT_K2_BIVARIATE = 1.0 / (4.0 * np.pi)


@dataclass
class PartialCorrelationEstimate:
    """Local partial correlation at one point with delta-method uncertainty."""

    alpha: float
    point: np.ndarray
    gradient: np.ndarray
    method: str
    std_err: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    x_point: Optional[np.ndarray] = None


def partial_cov(R):
    """Partial covariance of variables (1,2) given the rest: the 2x2 Schur
    complement R_11 - R_12 R_22^-1 R_21."""
    R = np.asarray(R, dtype=float)
    p = R.shape[0]
    if R.shape != (p, p) or p < 3:
        raise InvalidInputError("R must be square with at least 3 rows")
    R11 = R[:2, :2]
    R12 = R[:2, 2:]
    R22 = R[2:, 2:]
    try:
        C = np.linalg.solve(R22, R12.T)
    except np.linalg.LinAlgError:
        raise SingularConditioningError("conditioning block is singular")
    if not np.all(np.isfinite(C)):
        raise SingularConditioningError("conditioning block is singular")
    S = R11 - R12 @ C
    return 0.5 * (S + S.T)


def lgpc_from_R(R):
    """alpha = S_12 / sqrt(S_11 S_22) of the partial covariance matrix."""
    S = partial_cov(R)
    denom = np.sqrt(S[0, 0] * S[1, 1])
    if denom <= 0 or not np.isfinite(denom):
        raise SingularConditioningError("partial variances are not positive")
    return float(np.clip(S[0, 1] / denom, -1.0, 1.0))


def lgpc_batch(R_stack):
    """alpha over a stack of correlation matrices, vectorized."""
    R_stack = np.asarray(R_stack, dtype=float)
    R11 = R_stack[:, :2, :2]
    R12 = R_stack[:, :2, 2:]
    R22 = R_stack[:, 2:, 2:]
    C = np.linalg.solve(R22, np.swapaxes(R12, 1, 2))
    S = R11 - R12 @ C
    denom = np.sqrt(S[:, 0, 0] * S[:, 1, 1])
    return np.clip(S[:, 0, 1] / denom, -1.0, 1.0)


def lgpc_scalar(rho12, rho13, rho23):
    """Closed form for p = 3, vectorized over the inputs."""
    num = rho12 - rho13 * rho23
    den = np.sqrt(1.0 - np.asarray(rho13) ** 2) * np.sqrt(
        1.0 - np.asarray(rho23) ** 2
    )
    return num / den


def _matrix_from_vector(rho_vector, p, pairs):
    R = np.eye(p)
    for k, (j, l) in enumerate(pairs):
        R[j, l] = rho_vector[k]
        R[l, j] = rho_vector[k]
    return R


def lgpc_gradient(rho_vector, p):
    """Gradient of alpha with respect to the correlation parameters.

    Parameters are ordered over pairs (j, k), j < k, row-major. Uses the
    chain rule through the Schur complement: for a symmetric perturbation
    dR partitioned conformably,

        dS = dR_11 - dR_12 C - C^T dR_21 + C^T dR_22 C,  C = R_22^-1 R_21,

    and d(alpha) = dS_12 / sqrt(S_11 S_22)
                   - (alpha/2) (dS_11 / S_11 + dS_22 / S_22).
    """
    rho_vector = np.asarray(rho_vector, dtype=float)
    pairs = _pair_list(p)
    if rho_vector.size != len(pairs):
        raise InvalidInputError("rho_vector length does not match dimension")
    R = _matrix_from_vector(rho_vector, p, pairs)
    R22 = R[2:, 2:]
    R21 = R[2:, :2]
    try:
        C = np.linalg.solve(R22, R21)
    except np.linalg.LinAlgError:
        raise SingularConditioningError("conditioning block is singular")
    S = R[:2, :2] - R21.T @ C
    denom = np.sqrt(S[0, 0] * S[1, 1])
    if denom <= 0 or not np.isfinite(denom):
        raise SingularConditioningError("partial variances are not positive")
    alpha = S[0, 1] / denom

    grad = np.empty(len(pairs))
    for k, (j, l) in enumerate(pairs):
        dR = np.zeros((p, p))
        dR[j, l] = 1.0
        dR[l, j] = 1.0
        dS = (
            dR[:2, :2]
            - dR[:2, 2:] @ C
            - C.T @ dR[2:, :2]
            + C.T @ dR[2:, 2:] @ C
        )
        grad[k] = dS[0, 1] / denom - 0.5 * alpha * (
            dS[0, 0] / S[0, 0] + dS[1, 1] / S[1, 1]
        )
    return grad


def bivariate_psi(z_pair, rho):
    """Zero-mean unit-variance bivariate normal density."""
    z1, z2 = z_pair
    q = 1.0 - rho ** 2
    e = (z1 ** 2 - 2.0 * rho * z1 * z2 + z2 ** 2) / q
    return np.exp(-0.5 * e) / (2.0 * np.pi * np.sqrt(q))


def bivariate_score(z_pair, rho):
    """d/drho of log bivariate_psi at (z_pair, rho)."""
    z1, z2 = z_pair
    q = 1.0 - rho ** 2
    return rho / q + (z1 - rho * z2) * (z2 - rho * z1) / q ** 2


def variance_pairwise(z_eval, rho_vector, gradient, bandwidth, n, pairs=None):
    """Delta-method variance for the pairwise method.

    The asymptotic covariance of the correlation estimates is diagonal with
    entries int(K^2) / (psi(z_pair, rho) u(z_pair, rho)^2), the density at
    the point being estimated by the fitted local Gaussian model itself.
    Returns nan when some score u vanishes where the gradient is nonzero.
    """
    z_eval = np.asarray(z_eval, dtype=float)
    rho_vector = np.asarray(rho_vector, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    p = z_eval.size
    if pairs is None:
        pairs = _pair_list(p)
    b = bandwidth.scalar()
    var = 0.0
    for k, (j, l) in enumerate(pairs):
        if gradient[k] == 0.0:
            continue
        z_pair = (z_eval[j], z_eval[l])
        u = bivariate_score(z_pair, rho_vector[k])
        psi = bivariate_psi(z_pair, rho_vector[k])
        if abs(u) < 1e-10 or psi <= 0:
            return float("nan")
        omega = INT_K2_BIVARIATE / (psi * u ** 2)
        var += gradient[k] ** 2 * omega
    var /= n * b ** 2
    return float(np.sqrt(var))


def variance_trivariate(sample_z, z_eval, rho_vector, gradient, bandwidth, n):
    """Delta-method variance for the joint trivariate fit.

    The sandwich covariance J^-1 M J^-T of the three correlation estimates
    is built from kernel-weighted empirical moments of the local score:
    J from sum w_i u_i u_i^T and M from the centered sum of w_i^2 u_i u_i^T.
    Returns nan when J is numerically singular.
    """
    sample_z = np.asarray(sample_z, dtype=float)
    z_eval = np.asarray(z_eval, dtype=float)
    rho_vector = np.asarray(rho_vector, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    b = bandwidth.scalar()
    prob = _BatchProblem(z_eval[None, :], sample_z, b)
    J, M2, m1 = prob.score_moments(rho_vector[None, :])
    J, M2, m1 = J[0], M2[0], m1[0]
    M = (b ** 3) * (M2 - np.outer(m1, m1))
    try:
        Jinv = np.linalg.inv(J)
    except np.linalg.LinAlgError:
        return float("nan")
    if np.linalg.cond(J) > 1e12:
        return float("nan")
    cov = Jinv @ M @ Jinv.T / (n * b ** 3)
    var = float(gradient @ cov @ gradient)
    if var < 0 or not np.isfinite(var):
        return float("nan")
    return float(np.sqrt(var))


def confidence_band(alpha, std_err, level=0.95):
    """Normal-quantile band around alpha, clipped to [-1, 1]."""
    if not 0 < level < 1:
        raise InvalidInputError("level must be in (0, 1)")
    q = ndtri(1.0 - (1.0 - level) / 2.0)
    lo = max(alpha - q * std_err, -1.0)
    hi = min(alpha + q * std_err, 1.0)
    return lo, hi


def estimate_partial(field, sample_z=None, n=None, with_variance=True, level=0.95):
    """Per-point partial correlation estimates from a correlation field.

    sample_z and n are needed only for variance computation (trivariate
    variances use the data directly).
    """
    out = []
    p = field.p
    pairs = list(field.pair_index)
    rho = field.rho_vectors()
    for i in range(field.n_points):
        R = field.rho_matrices[i]
        alpha = lgpc_from_R(R)
        grad = lgpc_gradient(rho[i], p)
        est = PartialCorrelationEstimate(
            alpha=alpha, point=field.points[i], gradient=grad, method=field.method
        )
        if with_variance and n is not None:
            if field.method == "pairwise":
                se = variance_pairwise(
                    field.points[i], rho[i], grad, field.bandwidth, n, pairs
                )
            else:
                se = variance_trivariate(
                    sample_z, field.points[i], rho[i], grad, field.bandwidth, n
                )
            if np.isfinite(se):
                est.std_err = se
                est.ci_low, est.ci_high = confidence_band(alpha, se, level)
        out.append(est)
    return out
