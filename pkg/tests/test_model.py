import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from spotlight.errors import (DimensionError, InvalidPartitionError, NumericalError,
                              PreconditionError)
from spotlight.model import (GaussianPriorSpec, PartitionedForwardModel, partition_model,
                             simulate_data, whiten)

import oracles


def test_partition_selects_columns():
    A = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    model = partition_model(A, [1])
    np.testing.assert_array_equal(model.A1, [[2.0], [5.0]])
    np.testing.assert_array_equal(model.A2, [[1.0, 3.0], [4.0, 6.0]])


def test_partition_all_columns_leaves_no_clutter():
    A = np.arange(6.0).reshape(2, 3)
    model = partition_model(A, [0, 1, 2])
    assert model.n2 == 0
    np.testing.assert_array_equal(model.A1, A)


def test_partition_round_trip_random():
    A = np.random.default_rng(0).standard_normal((6, 5))
    model = partition_model(A, [4, 0])
    np.testing.assert_array_equal(model.full_matrix(), A)
    np.testing.assert_array_equal(model.A1, A[:, [4, 0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.data())
def test_partition_round_trip_property(m, n, data):
    A = np.random.default_rng(m * 31 + n).standard_normal((m, n))
    idx = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True))
    model = partition_model(A, idx)
    assert model.n1 + model.n2 == n
    np.testing.assert_array_equal(model.full_matrix(), A)
    x = np.random.default_rng(1).standard_normal(n)
    x1, x2 = model.gather(x)
    np.testing.assert_array_equal(model.scatter(x1, x2), x)
    np.testing.assert_allclose(model.forward(x1, x2), A @ x, rtol=1e-12, atol=1e-12)


def test_partition_sparse_round_trip():
    A = sp.random(7, 9, density=0.4, random_state=3, format="csr")
    model = partition_model(A, [8, 2, 5])
    assert model.is_sparse
    assert (model.full_matrix() != A).nnz == 0


@pytest.mark.parametrize("idx", [[], [3], [0, 0], [-1], [0.5]])
def test_partition_rejects_bad_indices(idx):
    with pytest.raises(InvalidPartitionError):
        partition_model(np.ones((2, 3)), np.asarray(idx))


def test_model_row_mismatch():
    with pytest.raises(DimensionError):
        PartitionedForwardModel(np.ones((3, 2)), np.ones((4, 1)))


def test_model_rejects_bad_noise():
    with pytest.raises(PreconditionError):
        PartitionedForwardModel(np.ones((3, 2)), None, noise_std=0.0)


def test_whiten_identity_for_unit_sigma():
    A = np.random.default_rng(0).standard_normal((4, 3))
    model = partition_model(A, [0])
    b = np.arange(4.0)
    wm, bw = whiten(model, b)
    assert wm.whitened and wm.noise_std == 1.0
    np.testing.assert_array_equal(wm.A1, model.A1)
    np.testing.assert_array_equal(bw, b)


def test_whiten_scalar():
    wm, bw = whiten(PartitionedForwardModel([[2.0]], None, noise_std=2.0), np.array([4.0]))
    np.testing.assert_array_equal(wm.A1, [[1.0]])
    np.testing.assert_array_equal(bw, [2.0])


def test_whiten_twice_is_an_error():
    wm, bw = whiten(PartitionedForwardModel([[2.0]], None, noise_std=2.0), np.array([4.0]))
    with pytest.raises(PreconditionError):
        whiten(wm, bw)


def test_whitened_map_equals_weighted_map():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((9, 5))
    b = rng.standard_normal(9)
    sigma, zeta = 0.3, 1.7
    model = partition_model(A, [1, 3], noise_std=sigma)
    wm, bw = whiten(model, b)
    x_w = oracles.tikhonov_lstsq(wm.stacked_matrix(), bw, zeta)
    # raw form: minimize ||b - A x||^2 / sigma^2 + ||x||^2 / zeta^2
    S = model.stacked_matrix()
    x_raw = np.linalg.solve(S.T @ S / sigma ** 2 + np.eye(5) / zeta ** 2, S.T @ b / sigma ** 2)
    np.testing.assert_allclose(x_w, x_raw, rtol=1e-12)


def test_whiten_with_factor():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((4, 3))
    model = partition_model(A, [2])
    L = np.linalg.cholesky(oracles.random_spd(rng, 4))
    W = np.linalg.inv(L)
    wm, bw = whiten(model, np.ones(4), factor=W)
    np.testing.assert_allclose(wm.A1, W @ A[:, [2]])
    np.testing.assert_allclose(bw, W @ np.ones(4))


def test_simulate_noiseless_limit():
    rng = np.random.default_rng(6)
    model = partition_model(rng.standard_normal((5, 4)), [0, 2], noise_std=1e-300)
    x1, x2 = rng.standard_normal(2), rng.standard_normal(2)
    b = simulate_data(model, x1, x2, seed=1)
    np.testing.assert_allclose(b, model.A1 @ x1 + model.A2 @ x2, rtol=1e-15, atol=1e-300)


def test_simulate_noise_variance():
    sigma = 0.7
    model = PartitionedForwardModel(np.ones((10_000, 1)), np.ones((10_000, 1)), noise_std=sigma)
    b = simulate_data(model, [0.0], [0.0], seed=11)
    assert abs(b.var() / sigma ** 2 - 1) < 0.05


def test_simulate_deterministic():
    model = PartitionedForwardModel(np.ones((20, 2)), np.ones((20, 3)), noise_std=0.1)
    b1 = simulate_data(model, np.ones(2), np.ones(3), seed=42)
    b2 = simulate_data(model, np.ones(2), np.ones(3), seed=42)
    assert b1.tobytes() == b2.tobytes()


def test_simulate_dimension_check():
    model = PartitionedForwardModel(np.ones((3, 2)), np.ones((3, 1)))
    with pytest.raises(DimensionError):
        simulate_data(model, np.ones(3), np.ones(1), seed=0)


def test_isotropic_prior_blocks():
    C11, C12, C21, C22 = GaussianPriorSpec.isotropic(2.0).blocks(2, 3)
    np.testing.assert_array_equal(C11, 4 * np.eye(2))
    np.testing.assert_array_equal(C22, 4 * np.eye(3))
    assert not C12.any() and C21.shape == (3, 2)
    C22a = GaussianPriorSpec.isotropic(2.0, alpha=0.5).blocks(2, 3)[3]
    np.testing.assert_array_equal(C22a, 4 * np.eye(3))
    assert GaussianPriorSpec.isotropic(2.0, alpha=0.1).c22_scale() == pytest.approx(100.0)


def test_block_prior_checks():
    C = oracles.random_spd(np.random.default_rng(0), 3)
    spec = GaussianPriorSpec.from_blocks(C[:1, :1], C[:1, 1:], C[1:, :1], C[1:, 1:])
    np.testing.assert_array_equal(spec.full(1, 2), C)
    with pytest.raises(PreconditionError):
        GaussianPriorSpec.from_blocks(C[:1, :1], C[:1, 1:], C[1:, :1] + 1, C[1:, 1:])
    with pytest.raises(NumericalError):
        GaussianPriorSpec.from_blocks([[1.0]], [[2.0]], [[2.0]], [[1.0]])
    with pytest.raises(PreconditionError):
        GaussianPriorSpec.isotropic(0.0)
