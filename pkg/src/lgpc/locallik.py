"""Kernel machinery and the local likelihood optimizer.

Fits the correlation parameters of a zero-mean, unit-variance Gaussian
density locally at one or many evaluation points by maximizing the penalized
local log-likelihood

    n^-1 sum_i K_b(Z_i - z) log psi(Z_i, R)  -  integral K_b(y - z) psi(y, R) dy,

where K_b is a product Gaussian kernel, so the integral term is available in
closed form via the convolution identity
integral N(y; z, B) N(y; 0, R) dy = N(z; 0, R + B) with B = diag(b^2).

The optimizer is a damped Newton ascent on the Fisher-z parameters
theta = atanh(rho), batched over evaluation points: because the objective,
gradient and Hessian depend on the data only through the kernel-weighted
moments sum_i w_i and sum_i w_i z_i z_i^T, each Newton iteration is O(d^3)
per point after a single O(n) moment pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateNeighborhoodError, InvalidInputError

LOG_2PI = np.log(2.0 * np.pi)

#: mass threshold below which a neighborhood is considered degenerate
DEGENERATE_MASS = 1e-8

#: convergence thresholds
GRAD_TOL = 1e-6
STEP_TOL = 1e-9
MAX_ITER = 200

#: fitted correlations are clamped to this bound downstream
RHO_BOUND = 0.999


def _pair_list(d):
    return [(j, k) for j in range(d) for k in range(j + 1, d)]


@dataclass(frozen=True)
class Bandwidth:
    """Per-dimension bandwidths, optionally derived from the plug-in rule."""

    b: np.ndarray
    c: float = np.nan
    rule: str = "explicit"

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if np.any(b <= 0) or not np.all(np.isfinite(b)):
            raise InvalidInputError("bandwidths must be positive and finite")
        object.__setattr__(self, "b", b)

    def scalar(self):
        """Common bandwidth value; the rules always produce identical dims."""
        return float(self.b[0])


def plugin_bandwidth(n, c, mode):
    """Plug-in bandwidth b = c * n^(-1/9) (trivariate) or c * n^(-1/6) (pairwise)."""
    if n < 2:
        raise InvalidInputError("n must be at least 2")
    if c <= 0:
        raise InvalidInputError("c must be positive")
    if mode == "trivariate":
        value, rule, dims = c * n ** (-1.0 / 9.0), "trivariate_n19", 3
    elif mode == "pairwise":
        value, rule, dims = c * n ** (-1.0 / 6.0), "pairwise_n16", 2
    else:
        raise InvalidInputError(f"unknown bandwidth mode '{mode}'")
    return Bandwidth(b=np.full(dims, value), c=c, rule=rule)


def kernel_weight(z_obs, z_eval, bandwidth, kernel="gaussian"):
    """Product-kernel weight of one observation relative to one point."""
    z_obs = np.asarray(z_obs, dtype=float)
    z_eval = np.asarray(z_eval, dtype=float)
    b = np.broadcast_to(bandwidth.b, z_obs.shape)
    return float(
        kernel_weight_matrix(z_eval[None, :], z_obs[None, :], b[0] * np.ones(1), kernel)[
            0, 0
        ]
    )


def kernel_weight_matrix(points, sample, b, kernel="gaussian", chunk=4_000_000):
    """Weight matrix W[p, i] = K_b(sample_i - point_p), chunked over points.

    b may be a scalar (same in every dimension) or a length-d vector.
    """
    points = np.asarray(points, dtype=float)
    sample = np.asarray(sample, dtype=float)
    d = sample.shape[1]
    bvec = np.broadcast_to(np.atleast_1d(np.asarray(b, dtype=float)), (d,))
    norm = 1.0 / ((2.0 * np.pi) ** (d / 2.0) * np.prod(bvec))
    if kernel == "truncated":
        # Gaussian truncated at radius 5 (scaled units), renormalized.
        norm /= chi2.cdf(25.0, df=d)
    elif kernel != "gaussian":
        raise InvalidInputError(f"unknown kernel '{kernel}'")

    n_pts = points.shape[0]
    out = np.empty((n_pts, sample.shape[0]))
    step = max(1, chunk // max(sample.shape[0], 1))
    ys = sample / bvec
    for start in range(0, n_pts, step):
        stop = min(start + step, n_pts)
        diff = ys[None, :, :] - (points[start:stop] / bvec)[:, None, :]
        d2 = np.einsum("pid,pid->pi", diff, diff)
        w = np.exp(-0.5 * d2) * norm
        if kernel == "truncated":
            w[d2 > 25.0] = 0.0
        out[start:stop] = w
    return out


def _sym_inv_det(M):
    """Inverse and determinant of stacked symmetric 2x2 or 3x3 matrices.

    Closed-form cofactor arithmetic; much cheaper than the LAPACK calls for
    the small matrices this module works with.
    """
    d = M.shape[-1]
    if d == 2:
        a, b, c = M[:, 0, 0], M[:, 0, 1], M[:, 1, 1]
        det = a * c - b * b
        inv = np.empty_like(M)
        inv[:, 0, 0] = c
        inv[:, 1, 1] = a
        inv[:, 0, 1] = -b
        inv[:, 1, 0] = -b
        inv /= det[:, None, None]
        return inv, det
    if d == 3:
        a, b, c = M[:, 0, 0], M[:, 0, 1], M[:, 0, 2]
        e, f, g = M[:, 1, 1], M[:, 1, 2], M[:, 2, 2]
        c00 = e * g - f * f
        c01 = c * f - b * g
        c02 = b * f - c * e
        det = a * c00 + b * c01 + c * c02
        inv = np.empty_like(M)
        inv[:, 0, 0] = c00
        inv[:, 0, 1] = c01
        inv[:, 0, 2] = c02
        inv[:, 1, 0] = c01
        inv[:, 1, 1] = a * g - c * c
        inv[:, 1, 2] = b * c - a * f
        inv[:, 2, 0] = c02
        inv[:, 2, 1] = inv[:, 1, 2]
        inv[:, 2, 2] = a * e - b * b
        inv /= det[:, None, None]
        return inv, det
    det = np.linalg.det(M)
    return np.linalg.inv(M), det


def _build_corr(rho, d, pairs):
    """Stack correlation matrices from a (P, m) parameter array."""
    P = rho.shape[0]
    R = np.broadcast_to(np.eye(d), (P, d, d)).copy()
    for k, (r, s) in enumerate(pairs):
        R[:, r, s] = rho[:, k]
        R[:, s, r] = rho[:, k]
    return R


def _corr_det_and_valid(R, rho, d):
    det = np.linalg.det(R)
    if d == 2:
        valid = det > 1e-12
    else:
        # unit-diagonal 3x3 with |rho| < 1 is PD iff det > 0
        valid = (det > 1e-12) & np.all(np.abs(rho) < 1.0, axis=1)
    return det, valid


class _BatchProblem:
    """Shared moments and closed-form objective pieces for a fit batch."""

    def __init__(self, points, sample, b, kernel="gaussian"):
        self.points = np.asarray(points, dtype=float)
        self.sample = np.asarray(sample, dtype=float)
        self.d = self.sample.shape[1]
        self.m = self.d * (self.d - 1) // 2
        self.pairs = _pair_list(self.d)
        self.b = float(b)
        self.n = self.sample.shape[0]
        W = kernel_weight_matrix(self.points, self.sample, self.b, kernel)
        self.mass = W.sum(axis=1)
        self.wbar = self.mass / self.n
        self.S = np.einsum("pi,ia,ib->pab", W, self.sample, self.sample) / self.n
        self._W = W  # kept for the moment-based variance estimators

    # -- objective pieces -------------------------------------------------

    def _sum_term(self, A, logdet):
        quad = np.einsum("pab,pab->p", A, self.S)
        return -0.5 * self.wbar * (self.d * LOG_2PI + logdet) - 0.5 * quad

    def _integral_term(self, R):
        Smat = R + (self.b ** 2) * np.eye(self.d)
        As = np.linalg.inv(Smat)
        dets = np.linalg.det(Smat)
        gz = np.einsum("pab,pb->pa", As, self.points)
        quad = np.einsum("pa,pa->p", gz, self.points)
        val = np.exp(-0.5 * quad) / np.sqrt((2.0 * np.pi) ** self.d * dets)
        return val, As, gz

    def _prep(self, rho):
        R = _build_corr(rho, self.d, self.pairs)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            A, det = _sym_inv_det(R)
        valid = (det > 1e-12) & np.all(np.abs(rho) < 1.0, axis=1)
        return R, A, det, valid

    def objective(self, rho):
        """Objective values; -inf where rho is outside the PD domain."""
        R, A, det, valid = self._prep(rho)
        obj = np.full(rho.shape[0], -np.inf)
        if not np.any(valid):
            return obj
        idx = np.where(valid)[0]
        val, _, _ = self._integral_term_subset(R[idx], self.points[idx])
        quad = np.einsum("pab,pab->p", A[idx], self.S[idx])
        obj[idx] = (
            -0.5 * self.wbar[idx] * (self.d * LOG_2PI + np.log(det[idx]))
            - 0.5 * quad
            - val
        )
        return obj

    def _integral_term_subset(self, R, points):
        Smat = R + (self.b ** 2) * np.eye(self.d)
        As, dets = _sym_inv_det(Smat)
        gz = np.einsum("pab,pb->pa", As, points)
        quad = np.einsum("pa,pa->p", gz, points)
        val = np.exp(-0.5 * quad) / np.sqrt((2.0 * np.pi) ** self.d * dets)
        return val, As, gz

    def objective_grad_hess(self, rho):
        """Objective, gradient and Hessian w.r.t. rho (valid points only).

        Returns (obj, grad, hess, valid); entries at invalid points are
        -inf / zero.
        """
        P = rho.shape[0]
        R, A_full, det, valid = self._prep(rho)
        obj = np.full(P, -np.inf)
        grad = np.zeros((P, self.m))
        hess = np.zeros((P, self.m, self.m))
        if not np.any(valid):
            return obj, grad, hess, valid
        idx = np.where(valid)[0]

        A = A_full[idx]
        Sm = self.S[idx]
        M = np.einsum("pab,pbc,pcd->pad", A, Sm, A)
        wbar = self.wbar[idx]
        val, As, gz = self._integral_term_subset(R[idx], self.points[idx])

        quad = np.einsum("pab,pab->p", A, Sm)
        obj[idx] = (
            -0.5 * wbar * (self.d * LOG_2PI + np.log(det[idx])) - 0.5 * quad - val
        )

        u_int = np.empty((idx.size, self.m))
        for k, (r, s) in enumerate(self.pairs):
            grad[idx, k] = M[:, r, s] - wbar * A[:, r, s]
            u_int[:, k] = gz[:, r] * gz[:, s] - As[:, r, s]
        grad[idx] -= val[:, None] * u_int

        for k, (r, s) in enumerate(self.pairs):
            for l in range(k, self.m):
                a, c = self.pairs[l]
                h_sum = wbar * (
                    A[:, s, a] * A[:, c, r] + A[:, s, c] * A[:, a, r]
                ) - (
                    A[:, s, a] * M[:, r, c]
                    + A[:, s, c] * M[:, r, a]
                    + A[:, r, a] * M[:, s, c]
                    + A[:, r, c] * M[:, s, a]
                )
                dudr = (
                    As[:, s, a] * As[:, c, r]
                    + As[:, s, c] * As[:, a, r]
                    - (
                        As[:, s, a] * gz[:, r] * gz[:, c]
                        + As[:, s, c] * gz[:, r] * gz[:, a]
                        + As[:, r, a] * gz[:, s] * gz[:, c]
                        + As[:, r, c] * gz[:, s] * gz[:, a]
                    )
                )
                h = h_sum - val * (u_int[:, k] * u_int[:, l] + dudr)
                hess[idx, k, l] = h
                hess[idx, l, k] = h
        return obj, grad, hess, valid

    # -- moment-based variance inputs -------------------------------------

    def score_moments(self, rho):
        """Kernel-weighted empirical moments of the local score at rho.

        Returns (J, M2, m1) with
          J  = n^-1 sum_i w_i  u_i u_i^T,
          M2 = n^-1 sum_i w_i^2 u_i u_i^T,
          m1 = n^-1 sum_i w_i  u_i.
        """
        R = _build_corr(rho, self.d, self.pairs)
        A = np.linalg.inv(R)
        G = np.einsum("pab,ib->pia", A, self.sample)
        U = np.empty((rho.shape[0], self.n, self.m))
        for k, (r, s) in enumerate(self.pairs):
            U[:, :, k] = G[:, :, r] * G[:, :, s] - A[:, None, r, s]
        W = self._W
        J = np.einsum("pi,pik,pil->pkl", W, U, U) / self.n
        M2 = np.einsum("pi,pi,pik,pil->pkl", W, W, U, U) / self.n
        m1 = np.einsum("pi,pik->pk", W, U) / self.n
        return J, M2, m1


def local_likelihood_objective(rho, z_eval, sample, bandwidth, kernel="gaussian"):
    """Penalized local log-likelihood and its analytic gradient at one point."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    z_eval = np.asarray(z_eval, dtype=float)
    prob = _BatchProblem(z_eval[None, :], sample, bandwidth.scalar(), kernel)
    if rho.size != prob.m:
        raise InvalidInputError(
            f"rho has {rho.size} entries, expected {prob.m} for d={prob.d}"
        )
    obj, grad, _, valid = prob.objective_grad_hess(rho[None, :])
    if not valid[0]:
        raise InvalidInputError("rho does not define a positive-definite correlation")
    return float(obj[0]), grad[0]


@dataclass
class LocalFit:
    """Result of one local correlation fit."""

    rho: np.ndarray
    point: np.ndarray
    converged: bool
    iterations: int
    objective_value: float
    fell_back_to_global: bool


def global_mle_correlations(sample, pairs=None):
    """Pearson correlations of the z-scale columns (the global fallback)."""
    sample = np.asarray(sample, dtype=float)
    d = sample.shape[1]
    if pairs is None:
        pairs = _pair_list(d)
    C = np.corrcoef(sample, rowvar=False)
    if d == 2:
        C = np.atleast_2d(C)
    return np.array([C[r, s] for r, s in pairs])


def _shrink_to_pd(rho, d, pairs):
    """Scale a parameter vector toward zero until it defines a PD matrix."""
    rho = rho.copy()
    for _ in range(60):
        R = _build_corr(rho[None, :], d, pairs)
        _, valid = _corr_det_and_valid(R, rho[None, :], d)
        if valid[0]:
            return rho
        rho *= 0.9
    return np.zeros_like(rho)


def fit_batch(points, sample, bandwidth, init=None, kernel="gaussian"):
    """Batched local likelihood fits at many evaluation points.

    Returns (rho, converged, iterations, objective, degenerate) arrays; at
    degenerate or non-converged points rho holds the global MLE correlations
    (clamped) and the caller decides how to flag them.
    """
    points = np.asarray(points, dtype=float)
    sample = np.asarray(sample, dtype=float)
    prob = _BatchProblem(points, sample, bandwidth.scalar(), kernel)
    P, m, d = points.shape[0], prob.m, prob.d

    glob = np.clip(global_mle_correlations(sample), -0.95, 0.95)
    glob = _shrink_to_pd(glob, d, prob.pairs)
    if init is None:
        rho0 = np.tile(glob, (P, 1))
    else:
        rho0 = np.clip(np.asarray(init, dtype=float).reshape(P, m), -0.95, 0.95)

    degenerate = prob.mass < DEGENERATE_MASS
    theta = np.arctanh(np.clip(rho0, -0.999999, 0.999999))
    active = ~degenerate
    converged = np.zeros(P, dtype=bool)
    iterations = np.zeros(P, dtype=int)
    obj = prob.objective(np.tanh(theta))

    for it in range(MAX_ITER):
        if not np.any(active):
            break
        idx = np.where(active)[0]
        rho = np.tanh(theta[idx])
        o, g, H, valid = prob_subset_ogh(prob, rho, idx)
        # convergence on the reparameterized scale: the scaled gradient
        # vanishes at interior optima and when rho saturates at the boundary
        D = 1.0 - rho ** 2
        g_t = D * g
        done = np.max(np.abs(g_t), axis=1) < GRAD_TOL
        done &= valid
        converged[idx[done]] = True
        active[idx[done]] = False
        idx = idx[~done]
        if idx.size == 0:
            break
        rho, o, g, H = rho[~done], o[~done], g[~done], H[~done]
        D, g_t = D[~done], g_t[~done]

        H_t = H * D[:, :, None] * D[:, None, :]
        diag = -2.0 * rho * D * g
        H_t[:, np.arange(m), np.arange(m)] += diag

        step = _newton_direction(H_t, g_t)
        # cap the step to keep tanh well away from saturation
        norm = np.max(np.abs(step), axis=1)
        big = norm > 5.0
        step[big] *= (5.0 / norm[big])[:, None]

        t = np.ones(idx.size)
        gs = np.einsum("pk,pk->p", g_t, step)
        accepted = np.zeros(idx.size, dtype=bool)
        for _ in range(40):
            trial = theta[idx] + t[:, None] * step
            o_new = prob_subset_obj(prob, np.tanh(trial), idx)
            ok = (~accepted) & np.isfinite(o_new) & (o_new >= o + 1e-4 * t * gs)
            theta[idx[ok]] = trial[ok]
            accepted |= ok
            if np.all(accepted):
                break
            t[~accepted] *= 0.5
        # points whose step collapsed: converged by step size
        tiny = (~accepted) & (
            t * np.max(np.abs(step), axis=1) * np.max(D, axis=1) < STEP_TOL
        )
        converged[idx[tiny]] = True
        active[idx[tiny]] = False
        iterations[idx] += 1
        # also stop points whose line search failed outright
        stuck = ~accepted & ~tiny
        active[idx[stuck]] = False

    rho_out = np.tanh(theta)
    fell_back = (~converged) | degenerate
    rho_out[fell_back] = np.clip(glob, -RHO_BOUND, RHO_BOUND)
    rho_out = np.clip(rho_out, -RHO_BOUND, RHO_BOUND)
    objective = prob.objective(rho_out)
    return rho_out, converged & ~degenerate, iterations, objective, degenerate


def prob_subset_ogh(prob, rho, idx):
    sub = _SubsetView(prob, idx)
    return sub.objective_grad_hess(rho)


def prob_subset_obj(prob, rho, idx):
    sub = _SubsetView(prob, idx)
    return sub.objective(rho)


class _SubsetView:
    """View of a _BatchProblem restricted to a subset of evaluation points."""

    def __init__(self, prob, idx):
        self.d = prob.d
        self.m = prob.m
        self.pairs = prob.pairs
        self.b = prob.b
        self.points = prob.points[idx]
        self.S = prob.S[idx]
        self.wbar = prob.wbar[idx]

    _prep = _BatchProblem._prep
    objective = _BatchProblem.objective
    objective_grad_hess = _BatchProblem.objective_grad_hess
    _integral_term_subset = _BatchProblem._integral_term_subset


def fit_local(z_eval, sample, bandwidth, init=None, kernel="gaussian"):
    """Fit the local correlation parameters at a single evaluation point.

    Raises DegenerateNeighborhoodError when the total kernel mass at the
    point is below 1e-8; on optimizer failure returns the global MLE
    correlations with fell_back_to_global set.
    """
    z_eval = np.asarray(z_eval, dtype=float)
    init_arr = None if init is None else np.asarray(init, dtype=float)[None, :]
    rho, conv, iters, obj, degen = fit_batch(
        z_eval[None, :], sample, bandwidth, init=init_arr, kernel=kernel
    )
    if degen[0]:
        raise DegenerateNeighborhoodError(
            f"kernel mass below {DEGENERATE_MASS} at point {z_eval}"
        )
    return LocalFit(
        rho=rho[0],
        point=z_eval,
        converged=bool(conv[0]),
        iterations=int(iters[0]),
        objective_value=float(obj[0]),
        fell_back_to_global=not bool(conv[0]),
    )


def _newton_direction(H_t, g_t):
    """Modified Newton ascent direction.

    Eigenvalues of the Hessian are floored in magnitude on the negative
    side, so indefinite (saddle) points still produce an ascent direction
    with a sensible scale instead of a crawl along a ridge.
    """
    w, V = np.linalg.eigh(H_t)
    floor = np.maximum(1e-4 * np.max(np.abs(w), axis=1, keepdims=True), 1e-12)
    scale = 1.0 / np.maximum(-w, floor)
    gv = np.einsum("pmk,pm->pk", V, g_t)
    step = np.einsum("pmk,pk->pm", V, scale * gv)
    bad = ~np.all(np.isfinite(step), axis=1)
    if np.any(bad):
        step[bad] = g_t[bad]
    return step
