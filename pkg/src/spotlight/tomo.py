"""Local fan-beam tomography test bed.

The image is a ``grid_n x grid_n`` array of square pixels of side
``pixel_size``, centred on the origin.  Pixel ``(i, j)`` (row ``i``, column
``j``) has flat index ``i * grid_n + j`` and covers
``x in [x0 + j h, x0 + (j + 1) h]``, ``y in [x0 + i h, x0 + (i + 1) h]`` with
``x0 = -grid_n h / 2``.

Rays run from a point source on a circle of radius ``source_radius`` to the
centres of an equiangular detector arc; row ``a * detector_count + d``
belongs to angle ``a`` and detector cell ``d``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, PreconditionError
from .model import partition_model, simulate_data

# Intersections shorter than this fraction of a pixel side are rounding noise
# from rays grazing a pixel corner.
MIN_SEGMENT = 1e-12


@dataclass(frozen=True)
class FanBeamGeometry:
    n_angles: int
    source_radius: float
    detector_count: int
    detector_span: float
    """Fan opening half-angle in radians."""

    @classmethod
    def default(cls, grid_n, n_angles=60, pixel_size=1.0):
        """Fan covering the whole grid with about one detector per pixel column.

        source_radius = 2 * grid_n / sqrt(2) pixels, half-angle
        asin(half_diagonal / source_radius) = 30 degrees, and
        detector_count = ceil(sqrt(2) * grid_n) so the fan width at the
        centre (the grid diagonal) is sampled once per pixel width.
        """
        R = 2.0 * grid_n / math.sqrt(2.0) * pixel_size
        half_diag = grid_n * pixel_size / math.sqrt(2.0)
        return cls(n_angles=int(n_angles), source_radius=R,
                   detector_count=int(math.ceil(math.sqrt(2.0) * grid_n)),
                   detector_span=math.asin(half_diag / R))

    def validate(self, grid_n, pixel_size=1.0):
        half_diag = grid_n * pixel_size / math.sqrt(2.0)
        if self.n_angles < 1:
            raise ConfigError("n_angles must be >= 1", "geometry.n_angles")
        if self.detector_count < 1:
            raise ConfigError("detector_count must be >= 1", "geometry.detector_count")
        if not self.source_radius > half_diag:
            raise ConfigError("source must lie outside the image grid", "geometry.source_radius")
        if not 0 < self.detector_span < math.pi / 2:
            raise ConfigError("detector_span must be in (0, pi/2)", "geometry.detector_span")

    @property
    def n_rays(self):
        return self.n_angles * self.detector_count

    def ray_endpoints(self):
        """Source and detector points, each an (n_rays, 2) array."""
        beta = 2.0 * np.pi * np.arange(self.n_angles) / self.n_angles
        D = self.detector_count
        gamma = self.detector_span * (2.0 * (np.arange(D) + 0.5) / D - 1.0)
        src = self.source_radius * np.column_stack([np.cos(beta), np.sin(beta)])
        # direction from source towards the centre, rotated by the fan angle
        theta = (beta + np.pi)[:, None] + gamma[None, :]
        length = 2.0 * self.source_radius
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        S = np.repeat(src, D, axis=0)
        E = S + length * dirs.reshape(-1, 2)
        return S, E

    def to_dict(self):
        return {"n_angles": self.n_angles, "source_radius": self.source_radius,
                "detector_count": self.detector_count, "detector_span": self.detector_span}


@dataclass(frozen=True)
class Roi:
    """Rectangular pixel window: top-left (row, col) and size."""

    row: int
    col: int
    height: int
    width: int

    @classmethod
    def centered(cls, grid_n, size):
        off = (grid_n - size) // 2
        return cls(off, off, size, size)

    def validate(self, grid_n):
        for name in ("row", "col"):
            if getattr(self, name) < 0:
                raise ConfigError(f"roi.{name} must be >= 0", f"roi.{name}")
        for name in ("height", "width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"roi.{name} must be >= 1", f"roi.{name}")
        if self.row + self.height > grid_n:
            raise ConfigError("ROI extends past the bottom of the grid", "roi.row")
        if self.col + self.width > grid_n:
            raise ConfigError("ROI extends past the right edge of the grid", "roi.col")

    def pixel_indices(self, grid_n):
        """Flat indices of ROI pixels in row-major order."""
        rows = np.arange(self.row, self.row + self.height)
        cols = np.arange(self.col, self.col + self.width)
        return (rows[:, None] * grid_n + cols[None, :]).ravel()

    @property
    def size(self):
        return self.height * self.width

    def to_dict(self):
        return {"row": self.row, "col": self.col, "height": self.height, "width": self.width}


# ---------------------------------------------------------------------------
# phantom

@dataclass(frozen=True)
class Ellipse:
    """Ellipse in normalized coordinates ([-1, 1] spans the grid)."""

    cx: float
    cy: float
    a: float
    b: float
    angle: float = 0.0
    """Rotation in degrees."""
    value: float = 1.0


def default_phantom_spec():
    """Root-like cross-section with fine structure around the centre.

    A dense outer body with a ring of air channels, a bright cortex band and
    small high-contrast inclusions near the centre, where the default ROI
    sits.
    """
    body = [Ellipse(0.0, 0.0, 0.78, 0.70, 10.0, 1.0),
            Ellipse(0.0, 0.0, 0.72, 0.64, 10.0, -0.35)]
    channels = []
    for k in range(7):
        t = 2 * math.pi * k / 7 + 0.3
        channels.append(Ellipse(0.46 * math.cos(t), 0.40 * math.sin(t), 0.11, 0.09,
                                math.degrees(t), -0.55))
    inner = [Ellipse(0.0, 0.0, 0.22, 0.20, 0.0, 0.45),
             Ellipse(-0.08, 0.05, 0.05, 0.03, 30.0, 0.9),
             Ellipse(0.09, -0.04, 0.04, 0.04, 0.0, -0.5),
             Ellipse(0.03, 0.11, 0.07, 0.015, -20.0, 0.7),
             Ellipse(-0.05, -0.10, 0.02, 0.06, 0.0, 0.6),
             Ellipse(0.13, 0.10, 0.03, 0.03, 0.0, 0.8)]
    return body + channels + inner


def make_phantom(grid_n, spec=None, scale=1.0):
    """Rasterize ellipses: each pixel centre gets the sum of containing values."""
    if grid_n < 8:
        raise PreconditionError("grid_n must be >= 8")
    if spec is None:
        spec = default_phantom_spec()
    c = (np.arange(grid_n) + 0.5) / grid_n * 2.0 - 1.0
    X, Y = np.meshgrid(c, c)  # X varies along columns, Y along rows
    img = np.zeros((grid_n, grid_n))
    for e in spec:
        t = math.radians(e.angle)
        dx, dy = X - e.cx, Y - e.cy
        u = dx * math.cos(t) + dy * math.sin(t)
        v = -dx * math.sin(t) + dy * math.cos(t)
        img[(u / e.a) ** 2 + (v / e.b) ** 2 <= 1.0] += e.value
    return scale * img.ravel()


def phantom_support(phantom, grid_n):
    return np.asarray(phantom).reshape(grid_n, grid_n) != 0


# ---------------------------------------------------------------------------
# ray tracing

def siddon_ray(start, end, grid_n, pixel_size=1.0):
    """Exact intersection lengths of segment start->end with the pixel grid.

    Returns ``(pixel_indices, lengths)``.  Parametric crossings with the
    vertical and horizontal grid lines are merged; each sub-interval lies in
    one pixel, found from its midpoint.  A segment running exactly along a
    grid line is assigned to the pixel on its positive side, so pixels own
    the half-open squares [left, right) x [bottom, top).
    """
    h = pixel_size
    x0 = -grid_n * h / 2.0
    x1 = x0 + grid_n * h
    sx, sy = start
    d = np.asarray(end, dtype=np.float64) - np.asarray(start, dtype=np.float64)
    length = math.hypot(d[0], d[1])
    lo, hi = 0.0, 1.0
    planes = []
    for s, dd in ((sx, d[0]), (sy, d[1])):
        if dd == 0.0:
            if not x0 <= s < x1:
                return np.zeros(0, dtype=np.int64), np.zeros(0)
            planes.append(None)
            continue
        with np.errstate(over="ignore"):
            a0, a1 = (x0 - s) / dd, (x1 - s) / dd
        lo, hi = max(lo, min(a0, a1)), min(hi, max(a0, a1))
        planes.append((s, dd))
    if hi <= lo:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    alphas = [np.array([lo, hi])]
    for p in planes:
        if p is None:
            continue
        s, dd = p
        with np.errstate(over="ignore"):
            a = (x0 + h * np.arange(grid_n + 1) - s) / dd
        alphas.append(a[(a > lo) & (a < hi)])
    alpha = np.unique(np.concatenate(alphas))
    seg = np.diff(alpha) * length
    mid = 0.5 * (alpha[1:] + alpha[:-1])
    col = _cell_index(sx, d[0], mid, x0, h)
    row = _cell_index(sy, d[1], mid, x0, h)
    keep = (seg > MIN_SEGMENT * h) & (col >= 0) & (col < grid_n) & (row >= 0) & (row < grid_n)
    return row[keep] * grid_n + col[keep], seg[keep]


def _cell_index(s, dd, t, x0, h):
    """Grid cell along one axis containing s + t * dd.

    When the coordinate rounds onto a grid line the side is decided from the
    parameter where the ray crosses that line, which no sub-interval contains.
    """
    u = (s + t * dd - x0) / h
    idx = np.floor(u).astype(np.int64)
    if dd != 0.0:
        tie = u == idx
        if tie.any():
            k = idx[tie]
            t_line = (x0 + k * h - s) / dd
            idx[tie] = np.where((t[tie] - t_line) * dd >= 0.0, k, k - 1)
    return idx


def fanbeam_matrix(geometry, grid_n, pixel_size=1.0):
    """Sparse CSR system matrix with one row per (angle, detector) ray.

    Rays that miss the grid give empty rows, which are kept.
    """
    geometry.validate(grid_n, pixel_size)
    S, E = geometry.ray_endpoints()
    indptr = [0]
    indices, data = [], []
    for k in range(S.shape[0]):
        idx, seg = siddon_ray(S[k], E[k], grid_n, pixel_size)
        order = np.argsort(idx, kind="stable")
        indices.append(idx[order])
        data.append(seg[order])
        indptr.append(indptr[-1] + idx.size)
    A = sp.csr_matrix((np.concatenate(data), np.concatenate(indices), np.asarray(indptr)),
                      shape=(S.shape[0], grid_n * grid_n))
    return A


def select_roi_rays(A, grid_n, roi):
    """Indices of rows with a positive intersection with the ROI."""
    roi.validate(grid_n)
    cols = roi.pixel_indices(grid_n)
    hits = np.asarray(sp.csc_matrix(A)[:, cols].getnnz(axis=1)) > 0
    rows = np.flatnonzero(hits)
    if rows.size == 0:
        raise PreconditionError("ROI invisible to scan: no ray intersects it")
    return rows


def empty_rays(A, support_mask):
    """Rows of A with no intersection with the support pixels."""
    cols = np.flatnonzero(np.asarray(support_mask).ravel())
    return np.flatnonzero(np.asarray(sp.csc_matrix(A)[:, cols].getnnz(axis=1)) == 0)


def estimate_sigma_empty_space(b, A, support_mask, min_rays=30):
    """Sample standard deviation of data on rays that miss the object."""
    rows = empty_rays(A, support_mask)
    if rows.size < min_rays:
        raise PreconditionError(f"only {rows.size} rays miss the object; need at least {min_rays}")
    return float(np.std(np.asarray(b)[rows], ddof=1))


# ---------------------------------------------------------------------------
# experiment

@dataclass(frozen=True, eq=False)
class LocalTomoExperiment:
    grid_n: int
    roi: Roi
    geometry: FanBeamGeometry
    pixel_size: float
    phantom: np.ndarray
    model: object
    """PartitionedForwardModel of the retained rays; A1 holds the ROI columns."""
    b: np.ndarray
    x1_true: np.ndarray
    x2_true: np.ndarray
    sigma_true: float
    sigma_est: float
    ray_rows: np.ndarray
    n_rays_total: int
    full_matrix: object = field(default=None, repr=False)

    def roi_image(self, x1):
        return np.asarray(x1).reshape(self.roi.height, self.roi.width)


def build_local_experiment(grid_n, geometry, roi, phantom_spec=None, sigma=0.01, seed=0,
                           pixel_size=1.0, phantom_scale=1.0, sigma_model="estimate"):
    """Simulate a full fan-beam scan and down-sample it to the ROI rays.

    The noisy full-scan data are generated first so the noise level can be
    estimated from rays that miss the object, as one would with measured
    data; then only rays crossing the ROI are retained.  ``sigma_model`` is
    either ``"estimate"`` or a number used as the model noise level.
    """
    roi.validate(grid_n)
    geometry.validate(grid_n, pixel_size)
    if not sigma > 0:
        raise ConfigError("sigma must be positive", "sigma")
    A = fanbeam_matrix(geometry, grid_n, pixel_size)
    phantom = make_phantom(grid_n, phantom_spec, phantom_scale)
    roi_cols = roi.pixel_indices(grid_n)
    full = partition_model(A, roi_cols, noise_std=sigma)
    x1_true, x2_true = full.gather(phantom)
    b_full = simulate_data(full, x1_true, x2_true, seed)
    try:
        sigma_est = estimate_sigma_empty_space(b_full, A, phantom_support(phantom, grid_n))
    except PreconditionError:
        if sigma_model == "estimate":
            raise
        sigma_est = float("nan")
    sigma_used = sigma_est if sigma_model == "estimate" else float(sigma_model)
    rows = select_roi_rays(A, grid_n, roi)
    local = partition_model(A[rows], roi_cols, noise_std=sigma_used)
    return LocalTomoExperiment(grid_n=grid_n, roi=roi, geometry=geometry, pixel_size=pixel_size,
                               phantom=phantom, model=local, b=b_full[rows], x1_true=x1_true,
                               x2_true=x2_true, sigma_true=float(sigma), sigma_est=sigma_est,
                               ray_rows=rows, n_rays_total=A.shape[0], full_matrix=A)
