import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from spotlight import projector
from spotlight.errors import DimensionError, NoInformationError, PreconditionError
from spotlight.model import PartitionedForwardModel, simulate_data, whiten


def test_exact_axis_aligned_column():
    basis = projector.exact_complement_basis(np.array([[1.0], [0.0]]))
    assert basis.r == 1
    np.testing.assert_allclose(np.abs(basis.U), [[1.0], [0.0]], atol=1e-15)
    Pp = projector.apply_P_perp(basis, np.eye(2))
    np.testing.assert_allclose(Pp, np.diag([0.0, 1.0]), atol=1e-15)


def test_exact_zero_matrix():
    basis = projector.exact_complement_basis(np.zeros((3, 2)))
    assert basis.r == 0
    np.testing.assert_array_equal(projector.apply_P_perp(basis, np.eye(3)), np.eye(3))


def test_exact_detects_rank():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(5)
    w = rng.standard_normal(5)
    w -= (w @ v) / (v @ v) * v
    A2 = np.column_stack([v, 2 * v, w])
    basis = projector.exact_complement_basis(A2)
    assert basis.r == 2
    assert np.linalg.norm(projector.apply_P_perp(basis, A2)) < 1e-12 * np.linalg.norm(A2)


def test_truncated_zero_rank():
    A2 = np.random.default_rng(1).standard_normal((4, 3))
    basis = projector.truncated_basis(A2, 0)
    assert basis.r == 0
    v = np.arange(4.0)
    np.testing.assert_array_equal(projector.apply_P_perp(basis, v), v)


def test_truncated_full_rank_matches_exact():
    A2 = np.random.default_rng(2).standard_normal((8, 5))
    t = projector.truncated_basis(A2, 5)
    e = projector.exact_complement_basis(A2)
    np.testing.assert_allclose(t.U @ t.U.T, e.U @ e.U.T, atol=1e-12)
    assert np.linalg.norm(projector.apply_P_perp(t, A2)) < 1e-12 * np.linalg.norm(A2)


def test_truncated_diag_residual():
    A2 = np.zeros((5, 3))
    A2[[0, 1, 2], [0, 1, 2]] = [3.0, 2.0, 1.0]
    basis = projector.truncated_basis(A2, 2)
    assert np.linalg.norm(projector.apply_P_perp(basis, A2)) == pytest.approx(1.0, rel=1e-14)


def test_truncated_rank_out_of_range():
    with pytest.raises(PreconditionError):
        projector.truncated_basis(np.ones((3, 2)), 3)


def test_randomized_low_rank():
    rng = np.random.default_rng(3)
    A2 = rng.standard_normal((8, 2)) @ rng.standard_normal((2, 6))
    basis = projector.randomized_basis(lambda x: A2 @ x, 6, 7, seed=5)
    resid = A2 - basis.U @ (basis.U.T @ A2)
    assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(A2)
    assert basis.r == 2


def test_randomized_zero_and_determinism():
    basis = projector.randomized_basis(lambda x: np.zeros(4), 3, 5, seed=0)
    assert basis.r == 0
    A2 = np.random.default_rng(4).standard_normal((10, 6))
    u1 = projector.randomized_basis(A2, 6, 4, seed=9).U
    u2 = projector.randomized_basis(A2, 6, 4, seed=9).U
    assert u1.tobytes() == u2.tobytes()


def test_randomized_power_iterations_sparse():
    A2 = sp.random(60, 40, density=0.1, random_state=2, format="csr")
    basis = projector.randomized_basis(A2, 40, 50, seed=1, power_iterations=1)
    d = A2.toarray()
    assert np.linalg.norm(d - basis.U @ (basis.U.T @ d)) <= 1e-8 * np.linalg.norm(d)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.integers(1, 12), st.integers(0, 2 ** 31))
def test_projector_identities(m, n2, seed):
    rng = np.random.default_rng(seed)
    A2 = rng.standard_normal((m, n2))
    basis = projector.exact_complement_basis(A2)
    assert basis.orthonormality_error() <= 1e-12 * max(basis.r, 1)
    v = rng.standard_normal(m)
    Pv, Qv = projector.apply_P(basis, v), projector.apply_P_perp(basis, v)
    np.testing.assert_allclose(Pv + Qv, v, rtol=0, atol=1e-14 * np.abs(v).max())
    assert abs(v @ v - (Pv @ Pv + Qv @ Qv)) <= 1e-12 * (v @ v)
    assert np.linalg.norm(projector.apply_P_perp(basis, Pv)) <= 1e-12 * np.linalg.norm(v)
    assert np.linalg.norm(projector.apply_P(basis, Qv)) <= 1e-12 * np.linalg.norm(v)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 20), st.integers(0, 10), st.integers(0, 2 ** 31))
def test_complement_rows(m, r, seed):
    r = min(r, m - 1)
    rng = np.random.default_rng(seed)
    U = np.linalg.qr(rng.standard_normal((m, max(r, 1))))[0][:, :r]
    basis = projector.SpotlightBasis(U=U, kind="exact")
    B = projector.complement_rows(basis)
    assert B.shape == (m - r, m)
    np.testing.assert_allclose(B @ B.T, np.eye(m - r), atol=1e-12)
    np.testing.assert_allclose(B @ U, 0.0, atol=1e-12)


def _wmodel(rng, m, n1, n2):
    return PartitionedForwardModel(rng.standard_normal((m, n1)), rng.standard_normal((m, n2)),
                                   whitened=True)


def test_project_model_zero_rank_is_identity():
    rng = np.random.default_rng(5)
    model = _wmodel(rng, 6, 2, 3)
    basis = projector.truncated_basis(model.A2, 0)
    proj, b_red = projector.project_model(model, basis, np.arange(6.0))
    np.testing.assert_array_equal(proj.B, np.eye(6))
    np.testing.assert_array_equal(b_red, np.arange(6.0))


def test_project_model_clutter_invariance():
    rng = np.random.default_rng(6)
    raw = PartitionedForwardModel(rng.standard_normal((9, 3)), rng.standard_normal((9, 4)),
                                  noise_std=0.1)
    x1 = rng.standard_normal(3)
    b_a = simulate_data(raw, x1, rng.standard_normal(4), seed=3)
    b_b = simulate_data(raw, x1, 100 * rng.standard_normal(4), seed=3)
    wm, bw_a = whiten(raw, b_a)
    _, bw_b = whiten(raw, b_b)
    basis = projector.exact_complement_basis(wm.A2)
    _, ra = projector.project_model(wm, basis, bw_a)
    _, rb = projector.project_model(wm, basis, bw_b)
    np.testing.assert_allclose(ra, rb, atol=1e-10)


def test_project_model_spectrum_frame_independent():
    rng = np.random.default_rng(7)
    A1 = rng.standard_normal((3, 2))
    model = PartitionedForwardModel(A1, np.array([[1.0], [0.0], [0.0]]), whitened=True)
    basis = projector.SpotlightBasis(U=np.array([[1.0], [0.0], [0.0]]), kind="exact")
    proj, _ = projector.project_model(model, basis, np.zeros(3))
    s_red = np.linalg.svd(proj.A1_reduced, compute_uv=False)
    s_ref = np.linalg.svd(projector.apply_P_perp(basis, A1), compute_uv=False)
    np.testing.assert_allclose(s_red, s_ref, rtol=1e-12)
    np.testing.assert_allclose(s_red, np.linalg.svd(A1[1:], compute_uv=False), rtol=1e-12)
    assert proj.residual_clutter_bound == pytest.approx(0.0, abs=1e-15)


def test_project_model_errors():
    rng = np.random.default_rng(8)
    raw = PartitionedForwardModel(rng.standard_normal((4, 2)), rng.standard_normal((4, 4)))
    with pytest.raises(PreconditionError):
        projector.project_model(raw, projector.truncated_basis(raw.A2, 1), np.zeros(4))
    wm, _ = whiten(raw, np.zeros(4))
    with pytest.raises(NoInformationError):
        projector.project_model(wm, projector.exact_complement_basis(wm.A2), np.zeros(4))
    with pytest.raises(DimensionError):
        projector.apply_P(projector.truncated_basis(wm.A2, 1), np.zeros(3))


def test_save_load_basis(tmp_path):
    A2 = np.random.default_rng(9).standard_normal((7, 4))
    basis = projector.truncated_basis(A2, 2)
    projector.save_basis(basis, tmp_path / "u.bin", tag="x")
    back = projector.load_basis(tmp_path / "u.bin")
    assert back.r == 2 and back.meta["tag"] == "x"
    np.testing.assert_array_equal(back.U, basis.U)
    np.testing.assert_array_equal(back.spectrum, basis.spectrum)
    three = projector.load_basis(tmp_path / "u.bin", r=3)
    np.testing.assert_array_equal(three.U, projector.truncated_basis(A2, 3).U)
    rb = projector.randomized_basis(A2, 4, 3, seed=0)
    projector.save_basis(rb, tmp_path / "r.bin")
    with pytest.raises(PreconditionError):
        projector.load_basis(tmp_path / "r.bin", r=5)
