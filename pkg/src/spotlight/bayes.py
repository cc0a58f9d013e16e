"""Gaussian posteriors and MAP estimators for partitioned linear models.

All functions expect whitened models (unit noise covariance).  The marginal
posterior of x1 is available by two independent routes, conditioning on the
data with the clutter lumped into the noise, and marginalizing the joint
posterior, which must agree.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, DimensionError, NumericalError, PreconditionError
from .model import GaussianPriorSpec, to_dense
from .projector import exact_complement_basis, project_model

COV_MAX_N1 = 2000
DIRECT_MAX_N = 6000
ITERATIVE_MIN_M = 5000


@dataclass(frozen=True, eq=False)
class GaussianPosterior:
    mean: np.ndarray
    cov: Optional[np.ndarray]
    route: str


def _require_whitened(model):
    if not model.whitened:
        raise PreconditionError("Bayesian estimators need a whitened model; call whiten() first")


def _check_data(model, b):
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (model.m,):
        raise DimensionError(f"data vector has shape {b.shape}, expected ({model.m},)")
    return b


def _cho(K):
    try:
        return la.cho_factor(K, lower=True, check_finite=False)
    except la.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc


def _cg(apply, rhs, tol, maxiter, what):
    n = rhs.size
    op = spla.LinearOperator((n, n), matvec=apply, dtype=np.float64)
    x, info = spla.cg(op, rhs, rtol=tol, atol=0.0, maxiter=maxiter)
    res = float(np.linalg.norm(rhs - apply(x)) / max(np.linalg.norm(rhs), 1e-300))
    if info != 0 or res > 10 * tol:
        raise ConvergenceError(f"{what}: CG stopped with relative residual {res:.3e}",
                               residual=res, iterations=maxiter)
    return x


def _want_cov(model, with_cov):
    return model.n1 <= COV_MAX_N1 if with_cov is None else with_cov


def posterior_conditioning(model, prior, b, with_cov=None):
    """Posterior of x1 by treating A2 x2 + noise as correlated noise.

    mean = G K^{-1} b and cov = C11 - G K^{-1} G^T with
    G = C11 A1^T + C12 A2^T and K = cov(b) = A C A^T + I.
    """
    _require_whitened(model)
    b = _check_data(model, b)
    n1, n2, m = model.n1, model.n2, model.m
    want_cov = _want_cov(model, with_cov)
    A1, A2 = model.A1, model.A2

    if prior.is_isotropic:
        z2, c22 = prior.zeta ** 2, prior.c22_scale()
        apply_G = lambda y: z2 * (A1.T @ y)  # noqa: E731

        def apply_K(y):
            out = z2 * (A1 @ (A1.T @ y)) + y
            if n2:
                out = out + c22 * (A2 @ (A2.T @ y))
            return np.asarray(out).ravel()

        C11 = z2 * np.eye(n1) if want_cov else None
    else:
        C11, C12, C21, C22 = prior.blocks(n1, n2)
        A1d, A2d = to_dense(A1), to_dense(A2)
        G = C11 @ A1d.T + C12 @ A2d.T
        apply_G = lambda y: G @ y  # noqa: E731
        apply_K = None

    if m > ITERATIVE_MIN_M:
        if apply_K is None:
            A1d, A2d = to_dense(A1), to_dense(A2)
            apply_K = lambda y: _lumped_apply(A1d, A2d, prior, y)  # noqa: E731
        w = _cg(apply_K, b, 1e-10, 20 * m, "posterior_conditioning")
        return GaussianPosterior(mean=np.asarray(apply_G(w)).ravel(), cov=None, route="conditioning")

    # explicit data covariance: signal part of x1, clutter part, and their cross terms
    if prior.is_isotropic:
        K = z2 * _gram(A1) + np.eye(m)
        if n2:
            K += c22 * _gram(A2)
        Gm = z2 * to_dense(A1).T
    else:
        cross = A1d @ C12 @ A2d.T
        K = A1d @ C11 @ A1d.T + cross + cross.T + A2d @ C22 @ A2d.T + np.eye(m)
        Gm = G
    fac = _cho(K)
    mean = Gm @ la.cho_solve(fac, b)
    cov = None
    if want_cov:
        cov = C11 - Gm @ la.cho_solve(fac, Gm.T)
        cov = 0.5 * (cov + cov.T)
    return GaussianPosterior(mean=mean, cov=cov, route="conditioning")


def _gram(A):
    """A A^T as a dense array."""
    return (A @ A.T).toarray() if sp.issparse(A) else A @ A.T


def _lumped_apply(A1d, A2d, prior, y):
    C11, C12, C21, C22 = prior.blocks(A1d.shape[1], A2d.shape[1])
    u1, u2 = A1d.T @ y, A2d.T @ y
    return A1d @ (C11 @ u1 + C12 @ u2) + A2d @ (C21 @ u1 + C22 @ u2) + y


def posterior_marginalization(model, prior, b, with_cov=None):
    """Posterior of x1 as the leading block of the joint posterior of (x1, x2).

    mu = C A^T (A C A^T + I)^{-1} b and D = C - C A^T (A C A^T + I)^{-1} A C;
    the x1 marginal is (mu[:n1], D[:n1, :n1]).
    """
    _require_whitened(model)
    b = _check_data(model, b)
    n1, n2, m = model.n1, model.n2, model.m
    want_cov = _want_cov(model, with_cov)
    A = to_dense(model.stacked_matrix())
    C = prior.full(n1, n2)
    CAt = C @ A.T
    if m > ITERATIVE_MIN_M:
        w = _cg(lambda y: A @ (CAt @ y) + y, b, 1e-10, 20 * m, "posterior_marginalization")
        return GaussianPosterior(mean=(CAt @ w)[:n1], cov=None, route="marginalization")
    K = A @ CAt
    K[np.diag_indices(m)] += 1.0
    fac = _cho(K)
    mu = CAt @ la.cho_solve(fac, b)
    cov = None
    if want_cov:
        D = C - CAt @ la.cho_solve(fac, CAt.T)
        cov = D[:n1, :n1]
        cov = 0.5 * (cov + cov.T)
    return GaussianPosterior(mean=mu[:n1], cov=cov, route="marginalization")


def solve_tikhonov(A, b, zeta, solver="auto", tol=1e-10, maxiter=None):
    """argmin ||b - A x||^2 + ||x||^2 / zeta^2.

    ``direct`` factors the normal matrix A^T A + I / zeta^2 by Cholesky;
    ``cg`` runs conjugate gradients on the same normal equations until the
    relative residual drops below ``tol``.  ``auto`` picks direct for
    n <= 6000.
    """
    if not zeta > 0:
        raise PreconditionError("zeta must be positive")
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if b.shape != (m,):
        raise DimensionError(f"data vector has shape {b.shape}, expected ({m},)")
    if n == 0:
        return np.zeros(0)
    reg = zeta ** -2
    if solver == "auto":
        solver = "direct" if n <= DIRECT_MAX_N else "cg"
    rhs = np.asarray(A.T @ b).ravel()
    if solver == "direct":
        N = to_dense(A.T @ A) if sp.issparse(A) else A.T @ A
        N = np.array(N, dtype=np.float64)
        N[np.diag_indices(n)] += reg
        return la.cho_solve(_cho(N), rhs)
    if solver == "cg":
        def apply(x):
            return np.asarray(A.T @ (A @ x)).ravel() + reg * x
        return _cg(apply, rhs, tol, maxiter or 10 * n, "MAP solve")
    raise ValueError(f"unknown solver {solver!r}")


def map_full(model, zeta, b, solver="auto"):
    """MAP estimate of the whole unknown under N(0, zeta^2 I).

    Returns the full vector in the original column order; the spotlight part
    is ``model.gather(x)[0]``.
    """
    b = _check_data(model, b)
    x = solve_tikhonov(model.stacked_matrix(), b, zeta, solver)
    return model.scatter(x[:model.n1], x[model.n1:])


def map_naive(A1, zeta, b, solver="auto"):
    """MAP estimate that ignores the clutter term altogether."""
    return solve_tikhonov(A1, b, zeta, solver)


def map_projected(projected, zeta, b_red, solver="direct"):
    """MAP estimate from the clutter-free reduced model."""
    return solve_tikhonov(projected.A1_reduced, b_red, zeta, solver)


def projected_posterior_mean(projected, C11, b_red):
    """Posterior mean of x1 under N(0, C11) given only the reduced data."""
    A = projected.A1_reduced
    G = C11 @ A.T
    K = A @ G
    K[np.diag_indices(K.shape[0])] += 1.0
    return G @ la.cho_solve(_cho(K), b_red)


def limit_consistency_check(model, C11, b, alphas):
    """Distances between the marginal and projected posterior means.

    For each alpha the clutter prior is alpha^-2 I (independent of x1) and
    d(alpha) = ||mu1(alpha) - mu1_proj|| / ||mu1_proj||.  As alpha -> 0 the
    marginal mean approaches the projected one.
    """
    _require_whitened(model)
    b = _check_data(model, b)
    alphas = np.asarray(alphas, dtype=np.float64)
    if np.any(alphas <= 0) or np.any(np.diff(alphas) >= 0):
        raise PreconditionError("alphas must be positive and strictly decreasing")
    n1, n2, m = model.n1, model.n2, model.m
    C11 = np.asarray(C11, dtype=np.float64)
    if n2 == 0:
        return np.zeros(alphas.size)
    A2 = to_dense(model.A2)
    if not (n2 < m and np.linalg.matrix_rank(A2) == n2):
        raise PreconditionError("limit check needs rank(A2) = n2 < m")
    basis = exact_complement_basis(A2)
    proj, b_red = project_model(model, basis, b)
    mu_proj = projected_posterior_mean(proj, C11, b_red)
    ref = np.linalg.norm(mu_proj)
    out = []
    for a in alphas:
        prior = GaussianPriorSpec.from_blocks(C11, np.zeros((n1, n2)), np.zeros((n2, n1)),
                                              a ** -2 * np.eye(n2), check=False)
        mu = posterior_conditioning(model, prior, b, with_cov=False).mean
        out.append(np.linalg.norm(mu - mu_proj) / ref)
    return np.asarray(out)


def relative_error(x1, x1_star):
    """||x1 - x1_star|| / ||x1_star||."""
    x1 = np.asarray(x1, dtype=np.float64)
    x1_star = np.asarray(x1_star, dtype=np.float64)
    if x1.shape != x1_star.shape:
        raise DimensionError(f"shape mismatch {x1.shape} vs {x1_star.shape}")
    ref = np.linalg.norm(x1_star)
    if ref == 0:
        raise PreconditionError("reference vector has zero norm")
    return float(np.linalg.norm(x1 - x1_star) / ref)
