"""Independent reference computations used as test oracles.

Nothing here calls into the package under test; each helper recomputes a
quantity from first principles with plain numpy.
"""
import numpy as np


def random_spd(rng, n, jitter=0.5):
    G = rng.standard_normal((n, n))
    return G @ G.T / n + jitter * np.eye(n)


def posterior_precision_form(A1, A2, C, b):
    """x1 marginal of the joint posterior via the precision (information) form.

    Posterior precision is A^T A + C^{-1}; mean solves it against A^T b.
    """
    A = np.hstack([A1, A2])
    n1 = A1.shape[1]
    H = A.T @ A + np.linalg.inv(C)
    cov = np.linalg.inv(H)
    mean = cov @ (A.T @ b)
    return mean[:n1], cov[:n1, :n1]


def null_basis(A2):
    """Orthonormal basis of the orthogonal complement of range(A2) via a full QR."""
    m, n2 = A2.shape
    Q, R = np.linalg.qr(A2, mode="complete")
    rank = np.linalg.matrix_rank(A2)
    assert rank == n2, "oracle assumes full column rank"
    return Q[:, n2:]


def tikhonov_lstsq(A, b, zeta):
    """Tikhonov solution as an augmented least-squares problem."""
    n = A.shape[1]
    M = np.vstack([A, np.eye(n) / zeta])
    rhs = np.concatenate([b, np.zeros(n)])
    return np.linalg.lstsq(M, rhs, rcond=None)[0]


def r_curve_loop(lam, c22, m):
    """R_r by an explicit double loop."""
    out = []
    for r in range(m):
        s = 0.0
        for j in range(r, len(lam)):
            s += float(lam[j]) * float(lam[j])
        out.append(c22 * s / (m - r))
    return np.array(out)


def segment_in_box(p, q, xmin, xmax, ymin, ymax):
    """Length of segment p->q inside an axis-aligned box (slab clipping)."""
    p = np.asarray(p, dtype=float)
    d = np.asarray(q, dtype=float) - p
    t0, t1 = 0.0, 1.0
    for k, (lo, hi) in enumerate(((xmin, xmax), (ymin, ymax))):
        if d[k] == 0.0:
            if p[k] < lo or p[k] >= hi:
                return 0.0
            continue
        a, c = (lo - p[k]) / d[k], (hi - p[k]) / d[k]
        t0, t1 = max(t0, min(a, c)), min(t1, max(a, c))
        if t1 <= t0:
            return 0.0
    return (t1 - t0) * float(np.hypot(d[0], d[1]))


def pixel_row_bruteforce(p, q, grid_n, h=1.0):
    """Dense row of intersection lengths, one clip per pixel.

    Pixel (i, j) covers x in [x0 + j h, x0 + (j+1) h], y in [x0 + i h, ...]
    with x0 = -grid_n h / 2, flat index i * grid_n + j.
    """
    x0 = -grid_n * h / 2.0
    row = np.zeros(grid_n * grid_n)
    for i in range(grid_n):
        for j in range(grid_n):
            row[i * grid_n + j] = segment_in_box(p, q, x0 + j * h, x0 + (j + 1) * h,
                                                 x0 + i * h, x0 + (i + 1) * h)
    return row


def segment_hits_rect(p, q, xmin, xmax, ymin, ymax):
    return segment_in_box(p, q, xmin, xmax, ymin, ymax) > 0.0
