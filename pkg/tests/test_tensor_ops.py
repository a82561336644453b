"""Dense tensor algebra: matricization, grouped reshaping, mode products, kron."""

import numpy as np
import pytest

from specrnn.tensor_ops import (
    dematricize,
    kron,
    matricize,
    mode_matrix_product,
    mode_vector_product,
    reshape_group,
    vectorize,
)


def brute_force_matricize(t, mode):
    """Index-arithmetic oracle: place each mode fiber as a column."""
    d = t.shape[mode]
    other = [s for i, s in enumerate(t.shape) if i != mode]
    out = np.zeros((d, int(np.prod(other))))
    for col, idx in enumerate(np.ndindex(*other)):
        full = list(idx)
        for i in range(d):
            out[i, col] = t[tuple(full[:mode] + [i] + full[mode:])]
    return out


class TestMatricize:
    def test_mode0_of_matrix_is_identity(self):
        t = np.arange(6, dtype=float).reshape(2, 3)
        np.testing.assert_array_equal(matricize(t, 0), t)

    def test_shape_arithmetic(self):
        t = np.zeros((2, 3, 4))
        assert matricize(t, 1).shape == (3, 8)

    def test_matches_fiber_oracle(self):
        rng = np.random.default_rng(0)
        t = rng.standard_normal((2, 3, 2))
        for mode in range(3):
            np.testing.assert_allclose(matricize(t, mode), brute_force_matricize(t, mode))

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        t = rng.standard_normal((2, 3, 2))
        for mode in range(3):
            np.testing.assert_array_equal(dematricize(matricize(t, mode), mode, t.shape), t)

    def test_mode_out_of_range(self):
        with pytest.raises(ValueError):
            matricize(np.zeros((2, 2)), 2)
        with pytest.raises(ValueError):
            matricize(np.zeros((2, 2)), -1)


class TestReshapeGroup:
    def test_full_grouping_is_vectorization(self):
        rng = np.random.default_rng(2)
        t = rng.standard_normal((2, 3, 4))
        np.testing.assert_array_equal(reshape_group(t, [3]), vectorize(t))

    def test_first_mode_grouping_is_matricization(self):
        rng = np.random.default_rng(3)
        t = rng.standard_normal((2, 3, 4))
        np.testing.assert_array_equal(reshape_group(t, [1, 2]), matricize(t, 0))

    def test_inverse_recovers_tensor(self):
        rng = np.random.default_rng(4)
        t = rng.standard_normal((2, 2, 2, 3))
        grouped = reshape_group(t, [2, 2])
        np.testing.assert_array_equal(grouped.reshape(t.shape), t)

    def test_group_sum_mismatch(self):
        with pytest.raises(ValueError):
            reshape_group(np.zeros((2, 2, 2)), [1, 1])
        with pytest.raises(ValueError):
            reshape_group(np.zeros((2, 2)), [2, 0])


class TestModeProducts:
    def test_identity_matrix_is_noop(self):
        rng = np.random.default_rng(5)
        t = rng.standard_normal((2, 3, 2))
        for mode in range(3):
            np.testing.assert_allclose(
                mode_matrix_product(t, np.eye(t.shape[mode]), mode), t
            )

    def test_composition_merges_matrices(self):
        rng = np.random.default_rng(6)
        t = rng.standard_normal((2, 3, 2))
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((5, 4))
        lhs = mode_matrix_product(mode_matrix_product(t, a, 1), b, 1)
        rhs = mode_matrix_product(t, b @ a, 1)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_matricization_identity(self):
        rng = np.random.default_rng(7)
        t = rng.standard_normal((3, 2, 4))
        m = rng.standard_normal((5, 2))
        result = mode_matrix_product(t, m, 1)
        np.testing.assert_allclose(matricize(result, 1), m @ matricize(t, 1), atol=1e-12)

    def test_doubling_matrix(self):
        t = np.array([[1.0, 2.0], [3.0, 4.0]])
        doubled = mode_matrix_product(t, 2.0 * np.eye(2), 0)
        np.testing.assert_array_equal(doubled, 2.0 * t)

    def test_vector_product_selects_slice_for_basis_vector(self):
        rng = np.random.default_rng(8)
        t = rng.standard_normal((2, 3, 2))
        e1 = np.zeros(3)
        e1[1] = 1.0
        np.testing.assert_allclose(mode_vector_product(t, e1, 1), t[:, 1, :])

    def test_vector_product_matches_loop_oracle(self):
        rng = np.random.default_rng(9)
        h = rng.standard_normal((3, 4, 2))
        x1 = rng.standard_normal(3)
        x2 = rng.standard_normal(4)
        out = mode_vector_product(mode_vector_product(h, x1, 0), x2, 0)
        oracle = np.zeros(2)
        for i in range(3):
            for j in range(4):
                for k in range(2):
                    oracle[k] += h[i, j, k] * x1[i] * x2[j]
        np.testing.assert_allclose(out, oracle, atol=1e-12)

    def test_full_contraction_is_bilinear_form(self):
        rng = np.random.default_rng(10)
        t = rng.standard_normal((3, 4))
        v1 = rng.standard_normal(3)
        v2 = rng.standard_normal(4)
        out = mode_vector_product(mode_vector_product(t, v1, 0), v2, 0)
        np.testing.assert_allclose(out, v1 @ t @ v2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mode_matrix_product(np.zeros((2, 3)), np.zeros((4, 2)), 1)
        with pytest.raises(ValueError):
            mode_vector_product(np.zeros((2, 3)), np.zeros(2), 1)


class TestKron:
    def test_basis_vectors(self):
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0, 0.0])
        out = kron([e1, e2])
        expected = np.zeros(6)
        expected[1] = 1.0  # index (0, 1) in C order
        np.testing.assert_array_equal(out, expected)

    def test_singleton(self):
        v = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(kron([v]), v)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            kron([])

    def test_consistency_with_mode_products(self):
        rng = np.random.default_rng(11)
        h = rng.standard_normal((2, 2, 2))
        x1, x2 = rng.standard_normal(2), rng.standard_normal(2)
        lhs = reshape_group(h, [2, 1]).T @ kron([x1, x2])
        rhs = mode_vector_product(mode_vector_product(h, x1, 0), x2, 0)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_consistency_randomized(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            dims = rng.integers(2, 4, size=3)
            p = int(rng.integers(1, 3))
            h = rng.standard_normal(tuple(dims) + (p,))
            xs = [rng.standard_normal(dim) for dim in dims]
            lhs = reshape_group(h, [3, 1]).T @ kron(xs)
            rhs = h
            for x in xs:
                rhs = mode_vector_product(rhs, x, 0)
            scale = np.finfo(float).eps * h.size
            np.testing.assert_allclose(lhs, rhs, atol=max(scale, 1e-12))


class TestScalarsAndVectors:
    def test_order0_tensor_valid(self):
        t = np.asarray(3.0)
        assert vectorize(t).shape == (1,)

    def test_order1_tensor(self):
        v = np.array([1.0, 2.0])
        np.testing.assert_array_equal(reshape_group(v, [1]), v)
