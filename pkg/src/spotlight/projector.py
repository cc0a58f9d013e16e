"""Orthonormal bases for the clutter range and the projectors they define.

A :class:`SpotlightBasis` holds U with orthonormal columns spanning (an
approximation of) the range of A2.  The projectors P = U U^T and
P_perp = I - P are only ever applied to vectors, never formed.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import DimensionError, NoInformationError, NumericalError, PreconditionError
from .model import noise_generator, to_dense

EXACT, TRUNCATED, RANDOMIZED = "exact", "truncated", "randomized"


@dataclass(frozen=True, eq=False)
class SpotlightBasis:
    """Orthonormal basis U (m x r) of the clutter subspace.

    ``complement`` optionally holds an m x (m - r) orthonormal basis of the
    orthogonal complement, available for free when U came from a full SVD.
    """

    U: np.ndarray
    kind: str
    spectrum: Optional[np.ndarray] = None
    complement: Optional[np.ndarray] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.U.shape[0]

    @property
    def r(self):
        return self.U.shape[1]

    def orthonormality_error(self):
        return float(np.linalg.norm(self.U.T @ self.U - np.eye(self.r)))


def left_svd(A2, full=True):
    """Singular values and left singular vectors of A2.

    With ``full=True`` all m left singular vectors are returned so that any
    truncation also yields its complement.
    """
    A = to_dense(A2)
    m, n2 = A.shape
    if n2 == 0 or not np.any(A):
        return (np.eye(m) if full else np.zeros((m, 0))), np.zeros(min(m, n2))
    try:
        U, s, _ = la.svd(A, full_matrices=full, lapack_driver="gesdd")
    except la.LinAlgError:
        try:
            U, s, _ = la.svd(A, full_matrices=full, lapack_driver="gesvd")
        except la.LinAlgError as exc:
            raise NumericalError(f"SVD of clutter matrix failed: {exc}") from exc
    return U, s


def default_rank_tol(m, n2):
    return np.finfo(np.float64).eps * max(m, n2)


def _from_svd(U_full, s, r, kind, **meta):
    m = U_full.shape[0]
    complement = U_full[:, r:] if U_full.shape[1] == m else None
    return SpotlightBasis(U=np.ascontiguousarray(U_full[:, :r]), kind=kind, spectrum=s,
                          complement=None if complement is None else np.ascontiguousarray(complement),
                          meta=meta)


def exact_complement_basis(A2, rank_tol=None, svd=None):
    """Basis of the numerical range of A2.

    The rank is the number of singular values above ``rank_tol`` times the
    largest one (default ``eps * max(m, n2)``).
    """
    m, n2 = A2.shape
    if m < 1:
        raise DimensionError("A2 must have at least one row")
    if rank_tol is None:
        rank_tol = default_rank_tol(m, n2)
    U, s = svd if svd is not None else left_svd(A2)
    r = int(np.count_nonzero(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    return _from_svd(U, s, r, EXACT, rank_tol=float(rank_tol))


def truncated_basis(A2, r, svd=None):
    """Basis of the top-``r`` left singular vectors of A2.

    When singular values tie at position r the basis is not unique (the
    factorization's order decides), but the projector is unique whenever
    lambda_r > lambda_{r+1}.
    """
    m, n2 = A2.shape
    if not 0 <= r <= min(m, n2):
        raise PreconditionError(f"truncation rank {r} outside [0, {min(m, n2)}]")
    U, s = svd if svd is not None else left_svd(A2)
    return _from_svd(U, s, int(r), TRUNCATED)


def randomized_basis(apply_A2, n2, k, seed, drop_tol=None, power_iterations=0, apply_A2T=None):
    """Randomized range finder.

    Draws a standard-normal sketch Omega (n2 x k) from ``seed``, forms
    Z = A2 Omega column by column through the black-box ``apply_A2`` and
    keeps the left singular vectors of Z whose singular values exceed
    ``drop_tol`` times the largest.  Optional power iterations need
    ``apply_A2T``.
    """
    if k < 1:
        raise PreconditionError("sketch size k must be >= 1")
    if sp.issparse(apply_A2) or isinstance(apply_A2, np.ndarray):
        mat = apply_A2
        apply_A2 = lambda x: mat @ x  # noqa: E731
        if apply_A2T is None:
            apply_A2T = lambda y: mat.T @ y  # noqa: E731
    omega = noise_generator(seed).standard_normal((n2, k))
    cols = [np.asarray(apply_A2(omega[:, j]), dtype=np.float64).ravel() for j in range(k)]
    m = cols[0].size
    if any(c.size != m for c in cols):
        raise DimensionError("operator returned vectors of inconsistent length")
    Z = np.column_stack(cols)
    for _ in range(power_iterations):
        if apply_A2T is None:
            raise PreconditionError("power iterations need the adjoint operator")
        Q = la.qr(Z, mode="economic")[0]
        W = np.column_stack([np.asarray(apply_A2T(Q[:, j])).ravel() for j in range(Q.shape[1])])
        W = la.qr(W, mode="economic")[0]
        Z = np.column_stack([np.asarray(apply_A2(W[:, j])).ravel() for j in range(W.shape[1])])
    if drop_tol is None:
        drop_tol = default_rank_tol(m, k)
    if not np.any(Z):
        return SpotlightBasis(U=np.zeros((m, 0)), kind=RANDOMIZED, spectrum=np.zeros(0),
                              meta={"seed": seed, "k": k, "drop_tol": float(drop_tol)})
    U, s, _ = la.svd(Z, full_matrices=False)
    r = int(np.count_nonzero(s > drop_tol * s[0]))
    return SpotlightBasis(U=np.ascontiguousarray(U[:, :r]), kind=RANDOMIZED, spectrum=None,
                          meta={"seed": seed, "k": k, "drop_tol": float(drop_tol)})


def _check_vec(basis, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != basis.m:
        raise DimensionError(f"vector length {v.shape[0]} != basis dimension {basis.m}")
    return v


def apply_P(basis, v):
    """U (U^T v); ``v`` may also be a matrix of column vectors."""
    v = _check_vec(basis, v)
    return basis.U @ (basis.U.T @ v)


def apply_P_perp(basis, v):
    v = _check_vec(basis, v)
    return v - basis.U @ (basis.U.T @ v)


def complement_rows(basis):
    """(m - r) x m matrix B with orthonormal rows and B U = 0.

    For r = 0 this is the identity, so the reduced problem is the original one.
    """
    m, r = basis.m, basis.r
    if r == 0:
        return np.eye(m)
    if basis.complement is not None:
        return basis.complement.T
    # Householder completion of U
    Q = la.qr(basis.U, mode="full")[0]
    return np.ascontiguousarray(Q[:, r:].T)


@dataclass(frozen=True, eq=False)
class ProjectedModel:
    """Clutter-free reduced model  b_red = A1_reduced x1 + white noise."""

    B: np.ndarray
    A1_reduced: np.ndarray
    residual_clutter_bound: float
    r: int

    @property
    def m_reduced(self):
        return self.B.shape[0]


def project_model(model, basis, b):
    """Map a whitened model and its data into complement coordinates.

    Returns ``(ProjectedModel, b_red)`` with b_red = B b and A1_reduced = B A1.
    The reduced noise B E stays white because B has orthonormal rows.
    """
    if not model.whitened:
        raise PreconditionError("project_model needs a whitened model")
    if basis.m != model.m:
        raise DimensionError(f"basis dimension {basis.m} != model rows {model.m}")
    if basis.r >= model.m:
        raise NoInformationError("no information remains: projection rank equals data dimension")
    B = complement_rows(basis)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (model.m,):
        raise DimensionError(f"data vector has shape {b.shape}, expected ({model.m},)")
    A1r = np.asarray((sp.csr_matrix(model.A1).T @ B.T).T) if sp.issparse(model.A1) else B @ model.A1
    if model.n2:
        A2r = np.asarray((sp.csr_matrix(model.A2).T @ B.T).T) if sp.issparse(model.A2) else B @ model.A2
        bound = float(np.linalg.norm(A2r))
    else:
        bound = 0.0
    return ProjectedModel(B=B, A1_reduced=A1r, residual_clutter_bound=bound, r=basis.r), B @ b


def save_basis(basis, path, **extra):
    """Write ``path`` (dense binary) plus ``path.json`` sidecar.

    When a complement is known the full square matrix [U | complement] is
    stored so a reloaded basis can be re-truncated at any rank.
    """
    import json

    from .matio import write_dense

    path = str(path)
    full = basis.complement is not None
    write_dense(path, np.hstack([basis.U, basis.complement]) if full else basis.U)
    side = {"kind": basis.kind, "r": basis.r, "m": basis.m, "full": full,
            "spectrum": None if basis.spectrum is None else [float(x) for x in basis.spectrum]}
    side.update(basis.meta)
    side.update(extra)
    with open(path + ".json", "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


def load_basis(path, r=None):
    """Load a basis written by :func:`save_basis`, optionally re-truncated to rank ``r``."""
    import json

    from .matio import read_dense

    path = str(path)
    with open(path + ".json") as fh:
        side = json.load(fh)
    M = read_dense(path)
    spectrum = None if side.get("spectrum") is None else np.asarray(side["spectrum"])
    meta = {k: v for k, v in side.items() if k not in ("kind", "r", "m", "full", "spectrum")}
    rank = side["r"] if r is None else int(r)
    if side["full"]:
        kind = side["kind"] if r is None else TRUNCATED
        return _from_svd(M, spectrum, rank, kind, **meta)
    if rank > M.shape[1]:
        raise PreconditionError(f"stored basis has rank {M.shape[1]} < requested {rank}")
    return SpotlightBasis(U=np.ascontiguousarray(M[:, :rank]), kind=side["kind"],
                          spectrum=spectrum, meta=meta)
