import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import assume, given, settings, strategies as st

from spotlight import tomo
from spotlight.config import RunConfig
from spotlight.errors import ConfigError, PreconditionError

import oracles


def test_phantom_empty_and_deterministic():
    assert not tomo.make_phantom(16, []).any()
    a, b = tomo.make_phantom(64), tomo.make_phantom(64)
    assert a.tobytes() == b.tobytes()
    with pytest.raises(PreconditionError):
        tomo.make_phantom(4)


def test_phantom_disk_area():
    n = 64
    img = tomo.make_phantom(n, [tomo.Ellipse(0.0, 0.0, 0.5, 0.5)])
    assert abs(img.sum() / (math.pi * (n / 4) ** 2) - 1) < 0.02


def test_default_phantom_has_structure_in_roi():
    cfg = RunConfig()
    x = tomo.make_phantom(cfg.grid_n)
    roi = x[cfg.make_roi().pixel_indices(cfg.grid_n)]
    assert np.unique(roi).size >= 4


def test_axis_aligned_ray_through_row():
    n = 8
    idx, seg = tomo.siddon_ray((-10.0, 0.5), (10.0, 0.5), n)
    assert seg.sum() == pytest.approx(n, abs=1e-12)
    assert sorted(idx) == list(range(4 * n, 5 * n))


def test_ray_missing_grid():
    idx, seg = tomo.siddon_ray((-10.0, 9.0), (10.0, 9.0), 8)
    assert idx.size == 0 and seg.size == 0
    idx, _ = tomo.siddon_ray((-10.0, -10.0), (-9.0, 10.0), 8)
    assert idx.size == 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-14, 14), min_size=4, max_size=4), st.sampled_from([1.0, 0.5, 1.9]))
def test_siddon_matches_bruteforce(coords, h):
    n = 12
    p, q = np.array(coords[:2]) * h, np.array(coords[2:]) * h
    # segments running along a grid line (to rounding) are assigned by
    # convention, which is covered separately
    for k in range(2):
        up, uq = p[k] / h + n / 2, q[k] / h + n / 2
        assume(not (round(up) == round(uq) and abs(up - round(up)) < 1e-9
                    and abs(uq - round(uq)) < 1e-9))
    with np.errstate(over="ignore"):
        want = oracles.pixel_row_bruteforce(p, q, n, h)
    idx, seg = tomo.siddon_ray(p, q, n, h)
    row = np.zeros(n * n)
    np.add.at(row, idx, seg)
    np.testing.assert_allclose(row, want, rtol=0, atol=1e-10 * h)


@pytest.mark.parametrize("x", [-4.0, 0.0, 2.0])
def test_ray_along_grid_line_counted_once(x):
    n = 8
    idx, seg = tomo.siddon_ray((x, -10.0), (x, 10.0), n)
    assert seg.sum() == pytest.approx(n, abs=1e-12)
    assert set(idx % n) == {int(x + n / 2)}
    idx, _ = tomo.siddon_ray((4.0, -10.0), (4.0, 10.0), n)
    assert idx.size == 0


def test_fanbeam_matrix_shape_and_geometry_checks():
    geom = tomo.FanBeamGeometry.default(16, n_angles=8)
    A = tomo.fanbeam_matrix(geom, 16)
    assert sp.isspmatrix_csr(A) and A.shape == (8 * geom.detector_count, 256)
    assert geom.detector_count == math.ceil(math.sqrt(2) * 16)
    assert math.degrees(geom.detector_span) == pytest.approx(30.0)
    with pytest.raises(ConfigError) as err:
        tomo.FanBeamGeometry(4, 1.0, 10, 0.5).validate(16)
    assert err.value.field == "geometry.source_radius"


def test_default_fan_covers_grid():
    # every pixel is seen, and every ray passing the inscribed circle hits the grid
    n, h = 16, 1.3
    geom = tomo.FanBeamGeometry.default(n, n_angles=12, pixel_size=h)
    A = tomo.fanbeam_matrix(geom, n, h)
    assert (A.getnnz(axis=0) > 0).all()
    D = geom.detector_count
    gamma = geom.detector_span * (2 * (np.arange(D) + 0.5) / D - 1)
    inside = np.abs(geom.source_radius * np.sin(gamma)) < n * h / 2
    hits = (A.getnnz(axis=1) > 0).reshape(geom.n_angles, D)
    assert hits[:, inside].all()


def test_roi_validation():
    with pytest.raises(ConfigError) as err:
        tomo.Roi(60, 0, 10, 10).validate(64)
    assert err.value.field == "roi.row"
    with pytest.raises(ConfigError):
        tomo.Roi(0, -1, 4, 4).validate(64)
    np.testing.assert_array_equal(tomo.Roi(1, 2, 2, 2).pixel_indices(8), [10, 11, 18, 19])


def test_select_roi_rays_definitions():
    n = 16
    A = tomo.fanbeam_matrix(tomo.FanBeamGeometry.default(n, n_angles=10), n)
    full = tomo.select_roi_rays(A, n, tomo.Roi(0, 0, n, n))
    np.testing.assert_array_equal(full, np.flatnonzero(A.getnnz(axis=1)))
    centre = tomo.Roi(8, 8, 1, 1)
    rows = tomo.select_roi_rays(A, n, centre)
    col = A.tocsc()[:, 8 * n + 8].toarray().ravel()
    assert np.all(col[rows] > 0)
    with pytest.raises(PreconditionError, match="ROI invisible"):
        tomo.select_roi_rays(sp.csr_matrix((5, n * n)), n, centre)


def test_roi_ray_count_matches_geometry_oracle():
    cfg = RunConfig()
    n, h = cfg.grid_n, cfg.pixel_size
    geom, roi = cfg.make_geometry(), cfg.make_roi()
    A = tomo.fanbeam_matrix(geom, n, h)
    rows = tomo.select_roi_rays(A, n, roi)
    S, E = geom.ray_endpoints()
    x0 = -n * h / 2
    rect = (x0 + roi.col * h, x0 + (roi.col + roi.width) * h,
            x0 + roi.row * h, x0 + (roi.row + roi.height) * h)
    hits = [k for k in range(S.shape[0]) if oracles.segment_in_box(S[k], E[k], *rect) > 1e-9]
    assert rows.tolist() == hits
    assert rows.size < geom.n_rays


def test_sigma_estimate():
    rng = np.random.default_rng(0)
    n_empty, n = 10_000, 4
    A = sp.vstack([sp.csr_matrix((n_empty, n)), sp.csr_matrix(np.ones((50, n)))]).tocsr()
    support = np.ones(n, dtype=bool)
    b = 0.01 * rng.standard_normal(n_empty + 50)
    assert abs(tomo.estimate_sigma_empty_space(b, A, support) / 0.01 - 1) < 0.05
    assert tomo.estimate_sigma_empty_space(np.zeros(n_empty + 50), A, support) == 0.0
    with pytest.raises(PreconditionError):
        tomo.estimate_sigma_empty_space(b[-40:], A[-40:], support)


@pytest.fixture(scope="module")
def desk():
    cfg = RunConfig()
    return tomo.build_local_experiment(cfg.grid_n, cfg.make_geometry(), cfg.make_roi(),
                                       sigma=cfg.noise_sigma, seed=0, pixel_size=cfg.pixel_size,
                                       phantom_scale=cfg.phantom_scale)


def test_desk_experiment_dimensions(desk):
    model = desk.model
    assert model.n1 == 256 and model.n == 4096
    assert model.m < desk.n_rays_total
    assert model.n2 > model.m


def test_desk_experiment_rows_are_bit_exact(desk):
    local = desk.model.full_matrix()
    assert (local != desk.full_matrix[desk.ray_rows]).nnz == 0


def test_desk_partition_consistency(desk):
    model = desk.model
    lhs = model.forward(desk.x1_true, desk.x2_true)
    rhs = desk.full_matrix[desk.ray_rows] @ desk.phantom
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_desk_sigma_estimate(desk):
    assert abs(desk.sigma_est / desk.sigma_true - 1) < 0.1
    assert desk.model.noise_std == desk.sigma_est


def test_known_sigma_model():
    cfg = RunConfig(grid_n=16, roi_size=4, n_angles=12)
    ex = tomo.build_local_experiment(16, cfg.make_geometry(), cfg.make_roi(), sigma=0.02,
                                     seed=1, pixel_size=cfg.pixel_size, sigma_model=0.05)
    assert ex.model.noise_std == 0.05 and ex.sigma_true == 0.02


@pytest.mark.slow
def test_large_preset_clutter_shape():
    """Large preset: n1 = 1600, n = 16384, n2 > m, R_0 > 1 and a finite R_r = 1 crossing."""
    import scipy.linalg as la

    from spotlight import truncation
    from spotlight.model import whiten

    cfg = RunConfig.from_sources({"preset": "large"})
    ex = tomo.build_local_experiment(cfg.grid_n, cfg.make_geometry(), cfg.make_roi(),
                                     sigma=cfg.noise_sigma, seed=0, pixel_size=cfg.pixel_size,
                                     phantom_scale=cfg.phantom_scale)
    wm, _ = whiten(ex.model, ex.b)
    assert wm.n1 == 1600 and wm.n == 16384 and wm.n2 > wm.m
    # squared singular values from the Gram matrix are enough for the tail sums
    ev = la.eigvalsh((wm.A2 @ wm.A2.T).toarray())
    lam = np.sqrt(np.clip(ev[::-1], 0.0, None))
    an = truncation.analyze(lam, cfg.zeta ** 2, wm.m)
    assert an.cSNR_bound > 1.0
    assert not an.fell_back and 0 < an.selected_r < wm.m
