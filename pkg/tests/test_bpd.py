# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from bpdq.bpd import (
    IntCodes,
    bit_plane_decompose,
    design_matrices,
    dequantize_group,
    init_group,
    local_row_errors,
    round_half_away,
    rtn_codes,
    rtn_int8,
    select_msb_planes,
)
from bpdq.errors import SingularMatrixError
from bpdq.linalg import hessian_from_activations


def codes_of(values):
    z = np.asarray(values, dtype=np.uint8).reshape(1, -1)
    return IntCodes(z=z, wmin=np.zeros(1), scale=np.ones(1))


class TestRtnInt8:
    def test_endpoints(self):
        c = rtn_int8(np.array([[0.0, 1.0]]))
        assert c.wmin[0] == 0.0
        assert c.scale[0] == pytest.approx(1 / 255)
        np.testing.assert_array_equal(c.z, [[0, 255]])

    def test_constant_row(self):
        c = rtn_int8(np.array([[5.0, 5.0, 5.0]]))
        assert c.wmin[0] == 5.0
        assert c.scale[0] == 1.0
        np.testing.assert_array_equal(c.z, [[0, 0, 0]])

    def test_half_rounds_away(self):
        np.testing.assert_array_equal(rtn_int8(np.array([[0.0, 0.5, 1.0]])).z, [[0, 128, 255]])

    def test_round_half_away(self):
        np.testing.assert_array_equal(round_half_away(np.array([0.5, 1.5, -0.5, -2.5, 0.49])), [1, 2, -1, -3, 0])

    def test_per_row_ranges(self):
        c = rtn_int8(np.array([[0.0, 1.0], [10.0, 30.0]]))
        np.testing.assert_array_equal(c.wmin, [0.0, 10.0])
        np.testing.assert_allclose(c.scale, [1 / 255, 20 / 255])

    def test_k_bit_codes(self):
        c = rtn_codes(np.array([[0.0, 0.5, 1.0]]), 2)
        np.testing.assert_array_equal(c.z, [[0, 2, 3]])


class TestPlanes:
    def test_five(self):
        p = bit_plane_decompose(codes_of([5]))[:, 0, 0]
        np.testing.assert_array_equal(p, [1, 0, 1, 0, 0, 0, 0, 0])

    @pytest.mark.parametrize("z,bit", [(255, 1), (0, 0)])
    def test_extremes(self, z, bit):
        assert np.all(bit_plane_decompose(codes_of([z])) == bit)

    def test_reconstruction(self):
        z = np.arange(256)
        planes = bit_plane_decompose(codes_of(z))
        weights = (1 << np.arange(8))[:, None, None]
        np.testing.assert_array_equal((weights * planes).sum(axis=0), z[None, :])

    def test_msb_two(self):
        planes = bit_plane_decompose(codes_of(np.arange(256)))
        kept = select_msb_planes(planes, 2)
        np.testing.assert_array_equal(kept[0], planes[6])
        np.testing.assert_array_equal(kept[1], planes[7])

    def test_msb_all_and_one(self):
        planes = bit_plane_decompose(codes_of(np.arange(256)))
        np.testing.assert_array_equal(select_msb_planes(planes, 8), planes)
        np.testing.assert_array_equal(select_msb_planes(planes, 1), planes[7:])

    def test_design_layout(self):
        planes = np.array([[[0, 1, 1]], [[1, 0, 1]]], dtype=np.uint8)
        d = design_matrices(planes)
        np.testing.assert_array_equal(d[0], [[1, 0, 1], [1, 1, 0], [1, 1, 1]])
        q = dequantize_group(planes, np.array([[0.5, 1.0, 2.0]]))
        np.testing.assert_array_equal(q, [[2.5, 1.5, 3.5]])


EXACT_ROWS = np.array([
    [0.0, 1.0, 2.0, 3.0, 3.0, 2.0, 1.0, 0.0],
    [3.0, 0.0, 2.0, 1.0, 0.0, 0.0, 3.0, 2.0],
    [1.0, 3.0, 0.0, 2.0, 2.0, 1.0, 3.0, 0.0],
])


class TestInitGroup:
    def test_exactly_representable(self):
        planes, coeffs, q, e = init_group(EXACT_ROWS, np.eye(8), 2, alpha=0.0)
        assert planes.shape == (2, 3, 8)
        assert coeffs.shape == (3, 3)
        np.testing.assert_allclose(q, EXACT_ROWS, atol=1e-12)
        np.testing.assert_allclose(e, 0.0, atol=1e-12)

    def test_scaled_exact_rows(self):
        block = 0.25 * EXACT_ROWS - 1.0
        _, _, q, _ = init_group(block, np.eye(8), 2, alpha=0.0)
        np.testing.assert_allclose(q, block, atol=1e-12)

    def test_constant_rows_damped(self):
        block = np.full((2, 8), 1.5)
        _, coeffs, q, _ = init_group(block, np.eye(8), 2, alpha=1e-4)
        np.testing.assert_allclose(q, block, rtol=1e-4)
        np.testing.assert_allclose(coeffs[:, 1:], 0.0, atol=1e-12)

    def test_constant_rows_undamped(self):
        with pytest.raises(SingularMatrixError):
            init_group(np.full((2, 8), 1.5), np.eye(8), 2, alpha=0.0)

    def test_state_identity(self):
        rng = np.random.default_rng(4)
        block = rng.standard_normal((4, 8))
        u = hessian_from_activations(rng.standard_normal((8, 32))).u
        _, _, q, e = init_group(block, u, 2, alpha=1e-4)
        np.testing.assert_allclose(block - q, e @ u, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_keeps_msb_planes(self, seed):
        rng = np.random.default_rng(seed)
        block = rng.standard_normal((4, 16))
        u = hessian_from_activations(rng.standard_normal((16, 64))).u
        planes, _, _, _ = init_group(block, u, 2, alpha=1e-4)
        np.testing.assert_array_equal(planes, select_msb_planes(bit_plane_decompose(rtn_int8(block)), 2))

    @pytest.mark.parametrize("seed", range(5))
    def test_rtn_candidate_dominates_rtn_per_row(self, seed):
        rng = np.random.default_rng(seed)
        block = rng.standard_normal((4, 16))
        u = hessian_from_activations(rng.standard_normal((16, 64))).u
        _, _, q, _ = init_group(block, u, 2, alpha=0.0, rtn_candidate=True)
        c = rtn_codes(block, 2)
        q_rtn = c.wmin[:, None] + c.z * c.scale[:, None]
        init = local_row_errors(block - q, u)
        rtn = local_row_errors(block - q_rtn, u)
        assert np.all(init <= rtn + 1e-9 * np.maximum(1.0, rtn))
