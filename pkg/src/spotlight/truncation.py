"""Clutter-to-noise diagnostics and selection of the truncation rank.

For whitened data the expected squared residual clutter after removing the
top r left singular directions of A2 is bounded by
``||C22|| * sum_{j>r} lambda_j**2`` while the projected noise has expected
squared norm ``m - r``.  Their ratio R_r drives the choice of r.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .errors import NumericalError, PreconditionError

SMALLEST_BELOW_ONE = "smallest-below-one"
ARGMIN = "argmin"


class TruncationWarning(UserWarning):
    pass


def tail_sums(lam):
    """t[r] = sum_{j >= r} lam[j]**2 for r = 0..len(lam), by reverse accumulation."""
    lam = np.asarray(lam, dtype=np.float64)
    t = np.zeros(lam.size + 1)
    t[:-1] = np.cumsum((lam ** 2)[::-1])[::-1]
    return t


def r_curve(lam, c22_norm, m, cap=None):
    """Ratios R_r = c22_norm * sum_{j>r} lambda_j^2 / (m - r) for r = 0..m-1.

    Entries past the number of singular values are exactly zero.  ``cap``
    limits the curve to its first ``cap`` entries.
    """
    if m < 1:
        raise PreconditionError("m must be >= 1")
    length = m if cap is None else max(1, min(m, int(cap)))
    t = tail_sums(lam)
    num = np.zeros(length)
    k = min(length, t.size)
    num[:k] = t[:k]
    return c22_norm * num / (m - np.arange(length))


def clutter_snr_bound(lam, c22_norm, m):
    """Upper bound R_0 on the clutter signal-to-noise ratio."""
    return float(r_curve(lam, c22_norm, m)[0])


def select_rank(R, rule=SMALLEST_BELOW_ONE):
    """Pick the truncation rank from an R curve.

    Returns ``(r, fell_back)``.  ``smallest-below-one`` takes the least r with
    R_r < 1 and falls back to the argmin (with a warning) if the curve never
    drops below one.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.size == 0:
        raise PreconditionError("empty R curve")
    if rule == SMALLEST_BELOW_ONE:
        below = np.flatnonzero(R < 1.0)
        if below.size:
            return int(below[0]), False
        warnings.warn("R_r never drops below 1; using the minimizing rank instead",
                      TruncationWarning, stacklevel=2)
        return int(np.argmin(R)), True
    if rule == ARGMIN:
        return int(np.argmin(R)), False
    raise ValueError(f"unknown selection rule {rule!r}")


def spectral_norm_psd(C, iterations=50, exact_below=500):
    """Largest eigenvalue of a symmetric PSD matrix (dense or operator)."""
    if np.isscalar(C):
        return float(C)
    n = C.shape[0]
    if n == 0:
        return 0.0
    if n <= exact_below and isinstance(C, np.ndarray):
        return float(la.eigvalsh(C, subset_by_index=[n - 1, n - 1])[0])
    vals = spla.eigsh(spla.aslinearoperator(C), k=1, which="LA", maxiter=iterations * n,
                      return_eigenvectors=False)
    return float(vals[0])


def expected_residual_clutter(lam, V, C22, r):
    """E ||P_r_perp A2 X2||^2 for X2 ~ N(0, C22).

    ``lam`` and ``V`` are the singular values and right singular vectors
    (columns) of A2; ``C22`` is a matrix or a scalar c meaning c I.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if r >= lam.size:
        return 0.0
    lt = lam[r:]
    if np.isscalar(C22):
        return float(C22 * np.sum(lt ** 2))
    Vt = np.asarray(V)[:, r:lam.size]
    # ||C22^{1/2} v||^2 = v^T C22 v; the Cholesky factor doubles as a PSD check
    try:
        L = la.cholesky(C22, lower=True)
    except la.LinAlgError as exc:
        w = la.eigvalsh(C22)
        if w.min() < -1e-12 * max(1.0, abs(w).max()):
            raise NumericalError("C22 is not positive semidefinite") from exc
        quad = np.einsum("ij,ij->j", Vt, C22 @ Vt)
    else:
        quad = np.sum((L.T @ Vt) ** 2, axis=0)
    return float(np.sum(lt ** 2 * quad))


@dataclass(frozen=True, eq=False)
class TruncationAnalysis:
    lam: np.ndarray
    c22_norm: float
    m: int
    R: np.ndarray
    cSNR_bound: float
    selected_r: int
    selection_rule: str
    fell_back: bool = False

    @property
    def no_projection_needed(self):
        return self.cSNR_bound < 1.0

    def to_dict(self):
        r_argmin, _ = select_rank(self.R, ARGMIN)
        return {
            "m": self.m,
            "c22_norm": self.c22_norm,
            "cSNR_bound": self.cSNR_bound,
            "no_projection_needed": self.no_projection_needed,
            "selected_r": self.selected_r,
            "selection_rule": self.selection_rule,
            "fell_back_to_argmin": self.fell_back,
            "argmin_r": r_argmin,
            "curve_length": int(self.R.size),
        }


def analyze(lam, c22_norm, m, rule=SMALLEST_BELOW_ONE, cap=None):
    lam = np.sort(np.asarray(lam, dtype=np.float64))[::-1]
    R = r_curve(lam, c22_norm, m, cap=cap)
    r, fell_back = select_rank(R, rule)
    return TruncationAnalysis(lam=lam, c22_norm=float(c22_norm), m=int(m), R=R,
                              cSNR_bound=float(R[0]), selected_r=r,
                              selection_rule=rule, fell_back=fell_back)
