# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from bpdq.errors import FormatError, NonFiniteError, ShapeError, TruncatedError
from bpdq.kernel import (
    BPQZ_HEADER,
    QuantizedLayer,
    bits_per_weight,
    bits_per_weight_fixed,
    build_tables,
    dequantize,
    lut_matvec,
    lut_op_counts,
    pack,
    unpack,
)
from bpdq.linalg import hessian_from_activations
from bpdq.solver import bpdq_quantize_layer
from bpdq.tensorio import RunConfig, synth_layer
from bpdq.theory import random_layer

# tolerance covers half-way values such as 4.625 printed as 4.63
TWO_DECIMALS = 0.005 + 1e-9


def small_layer(coeff_bits=16):
    bits = np.array([[[0, 1]]])
    return QuantizedLayer.from_planes(bits, np.array([[[1.0, 0.5]]]), g=2, coeff_bits=coeff_bits)


def seeded_layer(coeff_bits=16):
    w, x = synth_layer(7, 8, 64, 256)
    layer, _ = bpdq_quantize_layer(w, hessian_from_activations(x), RunConfig(k=2, g=32, coeff_bits=coeff_bits))
    return layer


class TestBitsPerWeight:
    @pytest.mark.parametrize("k,g,expected", [
        (2, 64, 2.75),
        (2, 128, 2.38),
        (2, 256, 2.19),
        (3, 64, 4.00),
        (3, 128, 3.50),
        (4, 128, 4.63),
    ])
    def test_variable_grid(self, k, g, expected):
        assert abs(bits_per_weight(k, g, 16) - expected) <= TWO_DECIMALS

    @pytest.mark.parametrize("b,g,expected", [
        (4, 64, 4.31),
        (3, 32, 3.59),
        (3, 64, 3.30),
        (2, 32, 2.56),
        (2, 64, 2.28),
    ])
    def test_fixed_grid(self, b, g, expected):
        assert abs(bits_per_weight_fixed(b, g, 16) - expected) <= TWO_DECIMALS

    def test_exact_values(self):
        assert bits_per_weight(2, 256) == 2.1875
        assert bits_per_weight(4, 128) == 4.625
        assert bits_per_weight(2, 32) == 3.5
        assert bits_per_weight_fixed(4, 64) == 4.3125


class TestDequantize:
    def test_by_hand(self):
        np.testing.assert_array_equal(dequantize(small_layer()), [[1.0, 1.5]])

    def test_zero_planes(self):
        coeffs = np.arange(2 * 3 * 3, dtype=np.float64).reshape(2, 3, 3)
        layer = QuantizedLayer.from_planes(np.zeros((2, 3, 8)), coeffs, g=4, coeff_bits=64)
        w = dequantize(layer)
        for gi in range(2):
            np.testing.assert_array_equal(w[:, 4 * gi:4 * gi + 4], np.repeat(coeffs[gi][:, :1], 4, axis=1))

    def test_coefficients_rounded_on_store(self):
        layer = QuantizedLayer.from_planes(np.ones((1, 1, 2)), np.array([[[0.1, 0.2]]]), g=2, coeff_bits=16)
        assert layer.coeffs[0, 0, 0] == float(np.float16(0.1))

    def test_corrupt_plane_payload(self):
        layer = small_layer()
        layer.planes = np.zeros((1, 1, 2), dtype=np.uint8)
        with pytest.raises(FormatError):
            dequantize(layer)


class TestContainer:
    def test_smallest_layer_round_trip(self):
        layer = QuantizedLayer.from_planes(np.array([[[1, 0, 1, 1, 0, 0, 1, 0]]]), np.array([[[0.25, -1.0]]]), g=8)
        raw = pack(layer)
        assert len(raw) == BPQZ_HEADER.size + 2 * 2 + 1
        back = unpack(raw)
        assert (back.d_out, back.d_in, back.g, back.k, back.coeff_bits) == (1, 8, 8, 1, 16)
        np.testing.assert_array_equal(back.planes, layer.planes)
        np.testing.assert_array_equal(dequantize(back), dequantize(layer))

    @pytest.mark.parametrize("coeff_bits", [16, 32, 64])
    def test_seeded_reserialization(self, coeff_bits):
        raw = pack(seeded_layer(coeff_bits))
        assert pack(unpack(raw)) == raw

    def test_packed_bit_order(self):
        bits = np.zeros((1, 1, 9), dtype=np.uint8)
        bits[0, 0, [0, 3, 8]] = 1
        layer = QuantizedLayer.from_planes(bits, np.zeros((1, 1, 2)), g=9)
        np.testing.assert_array_equal(layer.planes[0, 0], [0b00001001, 0b00000001])
        np.testing.assert_array_equal(layer.unpacked_planes(), bits)

    def test_truncated(self):
        raw = pack(small_layer())
        with pytest.raises(TruncatedError):
            unpack(raw[:-1])
        with pytest.raises(TruncatedError):
            unpack(raw[:10])

    def test_trailing_bytes(self):
        with pytest.raises(FormatError):
            unpack(pack(small_layer()) + b"\x00")

    def test_bad_magic(self):
        raw = bytearray(pack(small_layer()))
        raw[:4] = b"TNSR"
        with pytest.raises(FormatError):
            unpack(bytes(raw))

    def test_bad_version(self):
        raw = bytearray(pack(small_layer()))
        raw[4] = 2
        with pytest.raises(FormatError):
            unpack(bytes(raw))

    def test_half_precision_overflow(self):
        coeffs = np.array([[[1e5, 1.0]]])
        layer = QuantizedLayer.from_planes(np.ones((1, 1, 8)), coeffs, g=8)
        assert np.isinf(layer.coeffs[0, 0, 0])
        with pytest.raises(NonFiniteError):
            pack(layer)
        wide = QuantizedLayer.from_planes(np.ones((1, 1, 8)), coeffs, g=8, coeff_bits=32)
        assert unpack(pack(wide)).coeffs[0, 0, 0] == 1e5

    def test_non_finite_coefficient_on_read(self):
        raw = bytearray(pack(small_layer()))
        raw[BPQZ_HEADER.size:BPQZ_HEADER.size + 2] = np.array([np.inf], dtype="<f2").tobytes()
        with pytest.raises(NonFiniteError):
            unpack(bytes(raw))


class TestLutMatvec:
    def test_by_hand(self):
        assert lut_matvec(small_layer(), np.array([2.0, 3.0]))[0] == pytest.approx(6.5)

    def test_zero_input(self):
        layer = seeded_layer()
        assert not lut_matvec(layer, np.zeros(layer.d_in)).any()

    def test_one_hot_selects_column(self):
        layer = seeded_layer()
        dense = dequantize(layer)
        for j in (0, 5, 31, 32, 63):
            e = np.zeros(layer.d_in)
            e[j] = 1.0
            np.testing.assert_allclose(lut_matvec(layer, e), dense[:, j], rtol=1e-12, atol=1e-14)

    def test_random_layers_64bit(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            layer = random_layer(rng, coeff_bits=64)
            x = rng.standard_normal(layer.d_in)
            dense = dequantize(layer) @ x
            y = lut_matvec(layer, x)
            assert np.max(np.abs(y - dense)) <= 1e-12 * max(np.max(np.abs(dense)), 1e-300)

    def test_random_layers_32bit(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            layer = random_layer(rng, coeff_bits=32)
            x = rng.standard_normal(layer.d_in)
            dense = dequantize(layer) @ x
            assert np.max(np.abs(lut_matvec(layer, x) - dense)) <= 1e-5 * max(np.max(np.abs(dense)), 1e-300)

    def test_unaligned_groups(self):
        # g=12 straddles byte chunks
        rng = np.random.default_rng(2)
        bits = rng.integers(0, 2, size=(3, 5, 36))
        layer = QuantizedLayer.from_planes(bits, rng.standard_normal((3, 5, 4)), g=12, coeff_bits=64)
        x = rng.standard_normal(36)
        np.testing.assert_allclose(lut_matvec(layer, x), dequantize(layer) @ x, rtol=1e-12, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            lut_matvec(small_layer(), np.ones(3))

    def test_tables(self):
        t = build_tables(np.array([1.0, 2.0, 4.0]))
        assert t.shape == (1, 256)
        assert t[0, 0b101] == 5.0
        assert t[0, 0b111] == 7.0
        assert t[0, 0b1000] == 0.0

    def test_op_counts_deterministic(self):
        counts = lut_op_counts(seeded_layer())
        assert counts == lut_op_counts(seeded_layer())
        assert counts["chunks"] == 8
        assert counts["table_entries"] == 8 * 256
        assert counts["lookups"] == 2 * 8 * 8
