"""Estimator runs on a whitened partitioned model.

Glue shared by the CLI and the acceptance tests: the four reconstructions
(naive, marginal, full, projected) and the sweep over truncation ranks.
"""
import numpy as np
import scipy.sparse as sp

from . import bayes, projector, truncation
from .model import GaussianPriorSpec, to_dense

METHODS = ("naive", "marginal", "full", "projected")


def reference_solution(wmodel, zeta, b_w, solver="auto"):
    """Spotlight part of the full-domain MAP estimate."""
    return wmodel.gather(bayes.map_full(wmodel, zeta, b_w, solver))[0]


def parse_basis_spec(spec):
    """'exact' | 'truncated:<r>' | 'truncated:auto' | 'randomized:<k>'."""
    kind, _, arg = spec.partition(":")
    if kind == "exact" and not arg:
        return kind, None
    if kind == "truncated" and arg:
        return kind, "auto" if arg == "auto" else int(arg)
    if kind == "randomized" and arg:
        return kind, int(arg)
    raise ValueError(f"bad basis spec {spec!r}")


def select_rank_for(spectrum_w, zeta, m, rule=truncation.SMALLEST_BELOW_ONE):
    """Truncation analysis for an isotropic zeta prior and whitened spectrum."""
    return truncation.analyze(spectrum_w, zeta ** 2, m, rule)


def build_basis(wmodel, spec, zeta, seed=0, svd=None, rule=truncation.SMALLEST_BELOW_ONE):
    """Resolve a basis spec against a whitened model.

    ``svd`` is an optional precomputed ``(U_full, spectrum)`` of the whitened A2.
    Returns ``(basis, analysis_or_None)``.
    """
    kind, arg = parse_basis_spec(spec)
    A2 = wmodel.A2
    if kind == "randomized":
        op = (lambda x: A2 @ x)
        return projector.randomized_basis(op, wmodel.n2, arg, seed), None
    if svd is None:
        svd = projector.left_svd(A2)
    if kind == "exact":
        return projector.exact_complement_basis(A2, svd=svd), None
    analysis = None
    r = arg
    if arg == "auto":
        analysis = select_rank_for(svd[1], zeta, wmodel.m, rule)
        r = analysis.selected_r
    return projector.truncated_basis(A2, r, svd=svd), analysis


def run_method(method, wmodel, b_w, zeta, basis=None, solver="auto"):
    if method == "naive":
        return bayes.map_naive(wmodel.A1, zeta, b_w, solver)
    if method == "full":
        return reference_solution(wmodel, zeta, b_w, solver)
    if method == "marginal":
        prior = GaussianPriorSpec.isotropic(zeta)
        return bayes.posterior_conditioning(wmodel, prior, b_w, with_cov=False).mean
    if method == "projected":
        if basis is None:
            raise ValueError("projected method needs a basis")
        proj, b_red = projector.project_model(wmodel, basis, b_w)
        return bayes.map_projected(proj, zeta, b_red)
    raise ValueError(f"unknown method {method!r}")


def sweep_ranks(wmodel, b_w, zeta, r_list, U_full, reference):
    """Relative error of the projected MAP estimate for each rank in ``r_list``.

    ``U_full`` must hold all m left singular vectors of the whitened A2, so
    the complement rows for rank r are simply its trailing columns.
    """
    A1 = wmodel.A1
    W = np.asarray(A1.T @ U_full).T if sp.issparse(A1) else U_full.T @ to_dense(A1)
    c = U_full.T @ b_w
    out = []
    for r in r_list:
        x = bayes.solve_tikhonov(W[r:], c[r:], zeta, "direct")
        out.append(bayes.relative_error(x, reference))
    return np.asarray(out)


def default_r_list(m, step=None):
    step = step or max(1, m // 100)
    return list(range(0, m, step))
