"""Partitioned linear forward models b = A1 x1 + A2 x2 + noise.

The columns of a full forward matrix are split into a *spotlight* block A1
(the unknowns of interest) and a *clutter* block A2 (nuisance unknowns).
Matrices may be dense ``numpy`` arrays or ``scipy.sparse`` matrices.
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import DimensionError, InvalidPartitionError, NumericalError, PreconditionError


def _as_matrix(A):
    if sp.issparse(A):
        return sp.csr_matrix(A, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {A.shape}")
    return A


def to_dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


@dataclass(frozen=True, eq=False)
class PartitionedForwardModel:
    """Forward model split into spotlight (A1) and clutter (A2) column blocks.

    ``spotlight_indices`` and ``clutter_indices`` record where the columns of
    A1 and A2 sit in the original full matrix, so full-domain vectors can be
    reassembled with :meth:`scatter`.
    """

    A1: object
    A2: object
    noise_std: float = 1.0
    whitened: bool = False
    spotlight_indices: Optional[np.ndarray] = field(default=None, repr=False)
    clutter_indices: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        A1 = _as_matrix(self.A1)
        A2 = self.A2
        if A2 is None:
            A2 = np.zeros((A1.shape[0], 0))
        A2 = _as_matrix(A2)
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "A2", A2)
        if A1.shape[0] != A2.shape[0]:
            raise DimensionError(f"A1 has {A1.shape[0]} rows but A2 has {A2.shape[0]}")
        if A1.shape[0] < 1 or A1.shape[1] < 1:
            raise DimensionError("need m >= 1 and n1 >= 1")
        if not (np.isfinite(self.noise_std) and self.noise_std > 0):
            raise PreconditionError(f"noise_std must be positive, got {self.noise_std}")
        n1, n2 = A1.shape[1], A2.shape[1]
        if self.spotlight_indices is None:
            object.__setattr__(self, "spotlight_indices", np.arange(n1))
            object.__setattr__(self, "clutter_indices", np.arange(n1, n1 + n2))
        else:
            s = np.asarray(self.spotlight_indices, dtype=np.int64)
            c = np.asarray(self.clutter_indices, dtype=np.int64)
            if s.size != n1 or c.size != n2:
                raise InvalidPartitionError("permutation record does not match block sizes")
            object.__setattr__(self, "spotlight_indices", s)
            object.__setattr__(self, "clutter_indices", c)

    @property
    def m(self):
        return self.A1.shape[0]

    @property
    def n1(self):
        return self.A1.shape[1]

    @property
    def n2(self):
        return self.A2.shape[1]

    @property
    def n(self):
        return self.n1 + self.n2

    @property
    def is_sparse(self):
        return sp.issparse(self.A1) or sp.issparse(self.A2)

    def full_matrix(self):
        """Reassemble A in the original column order."""
        perm = np.concatenate([self.spotlight_indices, self.clutter_indices])
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        if self.is_sparse:
            stacked = sp.hstack([sp.csr_matrix(self.A1), sp.csr_matrix(self.A2)], format="csc")
            return sp.csr_matrix(stacked[:, inv])
        return np.hstack([self.A1, self.A2])[:, inv]

    def stacked_matrix(self):
        """[A1 A2] in partition order."""
        if self.is_sparse:
            return sp.hstack([sp.csr_matrix(self.A1), sp.csr_matrix(self.A2)], format="csr")
        return np.hstack([self.A1, self.A2])

    def scatter(self, x1, x2=None):
        """Place (x1, x2) into a full-length vector in original column order."""
        x = np.zeros(self.n)
        x[self.spotlight_indices] = x1
        if x2 is not None:
            x[self.clutter_indices] = x2
        return x

    def gather(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionError(f"expected vector of length {self.n}, got {x.shape}")
        return x[self.spotlight_indices], x[self.clutter_indices]

    def forward(self, x1, x2=None):
        out = self.A1 @ np.asarray(x1, dtype=np.float64)
        if x2 is not None and self.n2:
            out = out + self.A2 @ np.asarray(x2, dtype=np.float64)
        return np.asarray(out).ravel()


def partition_model(A, spotlight_indices, noise_std=1.0):
    """Split the columns of ``A`` into spotlight and clutter blocks.

    Columns listed in ``spotlight_indices`` form A1 in the given order; the
    remaining columns keep their original order in A2.
    """
    A = _as_matrix(A)
    n = A.shape[1]
    idx = np.asarray(spotlight_indices)
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidPartitionError("spotlight index set must be a non-empty 1-D sequence")
    if not np.issubdtype(idx.dtype, np.integer):
        raise InvalidPartitionError("spotlight indices must be integers")
    idx = idx.astype(np.int64)
    if idx.min() < 0 or idx.max() >= n:
        raise InvalidPartitionError(f"spotlight index out of range [0, {n})")
    if np.unique(idx).size != idx.size:
        raise InvalidPartitionError("duplicate spotlight index")
    mask = np.ones(n, dtype=bool)
    mask[idx] = False
    rest = np.flatnonzero(mask)
    if sp.issparse(A):
        Ac = A.tocsc()
        A1, A2 = sp.csr_matrix(Ac[:, idx]), sp.csr_matrix(Ac[:, rest])
    else:
        A1, A2 = A[:, idx], A[:, rest]
    return PartitionedForwardModel(A1, A2, noise_std=noise_std,
                                   spotlight_indices=idx, clutter_indices=rest)


def whiten(model, b, factor=None):
    """Return the noise-whitened model and data.

    By default the rows are divided by ``noise_std``.  For correlated noise a
    caller may pass ``factor``, an inverse square root of the noise
    covariance, which is applied from the left instead.
    """
    if model.whitened:
        raise PreconditionError("model is already whitened")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (model.m,):
        raise DimensionError(f"data vector has shape {b.shape}, expected ({model.m},)")
    if factor is None:
        s = model.noise_std
        A1, A2, bw = model.A1 / s, model.A2 / s, b / s
    else:
        W = to_dense(factor)
        if W.shape != (model.m, model.m):
            raise DimensionError("whitening factor must be m x m")
        A1, A2, bw = W @ model.A1, W @ model.A2, W @ b
        if sp.issparse(model.A1):
            A1, A2 = np.asarray(A1), np.asarray(A2)
    if sp.issparse(A1):
        A1, A2 = sp.csr_matrix(A1), sp.csr_matrix(A2)
    return replace(model, A1=A1, A2=A2, noise_std=1.0, whitened=True), bw


def noise_generator(seed):
    """PCG64 bit generator; draws are reproducible across platforms."""
    return np.random.Generator(np.random.PCG64(seed))


def simulate_data(model, x1_true, x2_true, seed):
    """Draw b = A1 x1 + A2 x2 + sigma * w with w ~ N(0, I) from ``seed``."""
    x1 = np.asarray(x1_true, dtype=np.float64)
    x2 = np.asarray(x2_true, dtype=np.float64)
    if x1.shape != (model.n1,) or x2.shape != (model.n2,):
        raise DimensionError(
            f"expected x1 of length {model.n1} and x2 of length {model.n2}, "
            f"got {x1.shape} and {x2.shape}")
    w = noise_generator(seed).standard_normal(model.m)
    return model.forward(x1, x2) + model.noise_std * w


@dataclass(frozen=True, eq=False)
class GaussianPriorSpec:
    """Zero-mean Gaussian prior on x = (x1, x2).

    Either explicit covariance blocks or the isotropic shorthand
    ``zeta**2 * I`` (with the x2 block replaced by ``alpha**-2 * I`` when
    ``alpha`` is given).
    """

    C11: Optional[np.ndarray] = None
    C12: Optional[np.ndarray] = None
    C21: Optional[np.ndarray] = None
    C22: Optional[np.ndarray] = None
    zeta: Optional[float] = None
    alpha: Optional[float] = None

    @classmethod
    def isotropic(cls, zeta, alpha=None):
        if not zeta > 0:
            raise PreconditionError("zeta must be positive")
        if alpha is not None and not alpha > 0:
            raise PreconditionError("alpha must be positive")
        return cls(zeta=float(zeta), alpha=None if alpha is None else float(alpha))

    @classmethod
    def from_blocks(cls, C11, C12, C21, C22, check=True):
        C11, C12, C21, C22 = (np.asarray(c, dtype=np.float64) for c in (C11, C12, C21, C22))
        if not np.array_equal(C21, C12.T):
            raise PreconditionError("C21 must equal C12 transposed")
        spec = cls(C11=C11, C12=C12, C21=C21, C22=C22)
        if check:
            C = spec.full(C11.shape[0], C22.shape[0])
            if not np.allclose(C, C.T, rtol=0, atol=1e-14 * max(1.0, np.abs(C).max())):
                raise PreconditionError("prior covariance is not symmetric")
            try:
                la.cholesky(C, lower=True)
            except la.LinAlgError as exc:
                raise NumericalError("prior covariance is not positive definite") from exc
        return spec

    @property
    def is_isotropic(self):
        return self.zeta is not None

    def blocks(self, n1, n2):
        """Return (C11, C12, C21, C22) as dense arrays."""
        if self.is_isotropic:
            z2 = self.zeta ** 2
            c22 = z2 if self.alpha is None else self.alpha ** -2
            return (z2 * np.eye(n1), np.zeros((n1, n2)), np.zeros((n2, n1)), c22 * np.eye(n2))
        if self.C11.shape != (n1, n1) or self.C22.shape != (n2, n2):
            raise DimensionError("prior blocks do not match model dimensions")
        return self.C11, self.C12, self.C21, self.C22

    def full(self, n1, n2):
        C11, C12, C21, C22 = self.blocks(n1, n2)
        return np.block([[C11, C12], [C21, C22]])

    def c22_scale(self):
        """Scalar c when C22 = c I, else None."""
        if not self.is_isotropic:
            return None
        return self.zeta ** 2 if self.alpha is None else self.alpha ** -2
