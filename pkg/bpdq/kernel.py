# packed bit-plane layers: BPQZ container, dequantization, LUT matvec and BPW accounting

# SPDX-License-Identifier: Apache-2.0

from dataclasses import dataclass
import logging
import struct

import numpy as np

from .errors import FormatError, NonFiniteError, ShapeError, TruncatedError
from .grid import combine_planes

# magic, version, d_out, d_in, g, k, coeff dtype, reserved
BPQZ_HEADER = struct.Struct("<4sIQQIBBH")
BPQZ_MAGIC = b"BPQZ"
BPQZ_VERSION = 1
COEFF_DTYPES = {
    0: np.dtype("<f2"),
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
}
COEFF_CODES = {16: 0, 32: 1, 64: 2}
CHUNK = 8

# LUT_BITS[p, j] is bit j of byte pattern p
LUT_BITS = ((np.arange(256)[:, None] >> np.arange(CHUNK)[None, :]) & 1).astype(np.float64)


@dataclass
class QuantizedLayer:
    """
    A variable-grid layer as stored: coefficients (n_groups, d_out, k+1),
    already rounded to coeff_bits, and k bit-packed planes (k, d_out,
    ceil(d_in/8)), LSB-first by column.
    """
    d_out: int
    d_in: int
    g: int
    k: int
    coeff_bits: int
    coeffs: np.ndarray
    planes: np.ndarray

    @classmethod
    def from_planes(cls, bits, coeffs, g, coeff_bits=16):
        bits = np.asarray(bits, dtype=np.uint8)
        k, d_out, d_in = bits.shape
        if coeff_bits not in COEFF_CODES:
            raise FormatError(f"unsupported coefficient width {coeff_bits}")
        with np.errstate(over="ignore"):
            stored = np.asarray(coeffs, dtype=np.float64).astype(COEFF_DTYPES[COEFF_CODES[coeff_bits]]).astype(np.float64)
        if not np.all(np.isfinite(stored)):
            logging.warning(f"{int(np.sum(~np.isfinite(stored)))} coefficient(s) overflow {coeff_bits}-bit storage")
        packed = np.packbits(bits, axis=-1, bitorder="little")
        return cls(d_out, d_in, g, k, coeff_bits, stored, packed)

    @property
    def n_groups(self):
        return self.d_in // self.g

    @property
    def row_bytes(self):
        return (self.d_in + CHUNK - 1) // CHUNK

    def check(self):
        if self.g <= 0 or self.d_in % self.g != 0:
            raise FormatError(f"group size {self.g} does not divide d_in={self.d_in}")
        if self.planes.shape != (self.k, self.d_out, self.row_bytes):
            raise FormatError(f"plane payload shape {self.planes.shape}, expected {(self.k, self.d_out, self.row_bytes)}")
        if self.coeffs.shape != (self.n_groups, self.d_out, self.k + 1):
            raise FormatError(f"coefficient table shape {self.coeffs.shape}, expected {(self.n_groups, self.d_out, self.k + 1)}")
        return self

    def unpacked_planes(self):
        return np.unpackbits(self.planes, axis=-1, count=self.d_in, bitorder="little")


def dequantize(layer):
    layer.check()
    bits = layer.unpacked_planes().transpose(1, 2, 0)
    rep = np.repeat(layer.coeffs.transpose(1, 0, 2), layer.g, axis=1)
    return combine_planes(rep[:, :, 0], rep[:, :, 1:], bits)


def pack(layer):
    layer.check()
    header = BPQZ_HEADER.pack(
        BPQZ_MAGIC, BPQZ_VERSION, layer.d_out, layer.d_in, layer.g, layer.k,
        COEFF_CODES[layer.coeff_bits], 0,
    )
    dt = COEFF_DTYPES[COEFF_CODES[layer.coeff_bits]]
    with np.errstate(over="ignore"):
        stored = layer.coeffs.astype(dt)
    if not np.all(np.isfinite(stored)):
        raise NonFiniteError(f"{int(np.sum(~np.isfinite(stored)))} coefficient(s) not finite at {layer.coeff_bits} bits")
    return header + stored.tobytes(order="C") + np.ascontiguousarray(layer.planes).tobytes(order="C")


def unpack(raw):
    raw = bytes(raw)
    if len(raw) < BPQZ_HEADER.size:
        if raw[:4] != BPQZ_MAGIC[:len(raw[:4])]:
            raise FormatError("not a BPQZ stream")
        raise TruncatedError(f"BPQZ header truncated at {len(raw)} bytes")
    magic, version, d_out, d_in, g, k, code, reserved = BPQZ_HEADER.unpack_from(raw)
    if magic != BPQZ_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != BPQZ_VERSION:
        raise FormatError(f"unsupported BPQZ version {version}")
    if code not in COEFF_DTYPES:
        raise FormatError(f"unknown coefficient dtype code {code}")
    if reserved != 0:
        raise FormatError(f"reserved header field is {reserved}, expected 0")
    if g == 0 or d_in % g != 0:
        raise FormatError(f"group size {g} does not divide d_in={d_in}")

    dt = COEFF_DTYPES[code]
    n_coeffs = (d_in // g) * d_out * (k + 1)
    row_bytes = (d_in + CHUNK - 1) // CHUNK
    n_plane_bytes = k * d_out * row_bytes
    expected = BPQZ_HEADER.size + n_coeffs * dt.itemsize + n_plane_bytes
    if len(raw) < expected:
        raise TruncatedError(f"BPQZ stream has {len(raw)} bytes, header declares {expected}")
    if len(raw) > expected:
        raise FormatError(f"{len(raw) - expected} trailing bytes after BPQZ payload")

    off = BPQZ_HEADER.size
    coeffs = np.frombuffer(raw, dtype=dt, count=n_coeffs, offset=off).astype(np.float64)
    if not np.all(np.isfinite(coeffs)):
        raise NonFiniteError("BPQZ coefficient table holds NaN or Inf")
    off += n_coeffs * dt.itemsize
    planes = np.frombuffer(raw, dtype=np.uint8, count=n_plane_bytes, offset=off).copy()
    coeff_bits = {v: b for b, v in COEFF_CODES.items()}[code]
    return QuantizedLayer(
        d_out, d_in, g, k, coeff_bits,
        coeffs.reshape(d_in // g, d_out, k + 1),
        planes.reshape(k, d_out, row_bytes),
    )


def _group_chunks(layer):
    # (chunk indices, byte masks) restricting each chunk to one group's columns
    spans = []
    for gi in range(layer.n_groups):
        s, end = gi * layer.g, (gi + 1) * layer.g
        chunks = np.arange(s // CHUNK, (end - 1) // CHUNK + 1)
        lo = np.clip(s - chunks * CHUNK, 0, CHUNK)
        hi = np.clip(end - chunks * CHUNK, 0, CHUNK)
        masks = ((1 << hi) - (1 << lo)).astype(np.uint8)
        spans.append((chunks, masks))
    return spans


def build_tables(x):
    """T[c, p] = sum of x over the set bits of pattern p in chunk c."""
    n_chunks = (x.size + CHUNK - 1) // CHUNK
    padded = np.zeros(n_chunks * CHUNK)
    padded[:x.size] = x
    return padded.reshape(n_chunks, CHUNK) @ LUT_BITS.T


def lut_matvec(layer, x):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != layer.d_in:
        raise ShapeError(f"input has length {x.size}, layer expects {layer.d_in}")
    layer.check()
    tables = build_tables(x)
    y = np.zeros(layer.d_out)
    for gi, (chunks, masks) in enumerate(_group_chunks(layer)):
        c = layer.coeffs[gi]
        s = gi * layer.g
        y += c[:, 0] * x[s:s + layer.g].sum()
        patterns = layer.planes[:, :, chunks] & masks
        sums = tables[chunks, patterns].sum(axis=-1)
        for i in range(layer.k):
            y += c[:, i + 1] * sums[i]
    return y


def lut_op_counts(layer):
    n_chunks = layer.row_bytes
    return {
        "rows": layer.d_out,
        "cols": layer.d_in,
        "planes": layer.k,
        "chunks": n_chunks,
        "table_entries": n_chunks * 256,
        "lookups": layer.k * layer.d_out * sum(c.size for c, _ in _group_chunks(layer)),
    }


def bits_per_weight(k, g, coeff_bits=16):
    return k + (k + 1) * coeff_bits / g


def bits_per_weight_fixed(b, g, scale_bits=16):
    return b + (scale_bits + b) / g


def log_layer(layer):
    logging.info(f"layer {layer.d_out}x{layer.d_in}, k={layer.k}, g={layer.g}, {layer.coeff_bits}-bit coefficients, {bits_per_weight(layer.k, layer.g, layer.coeff_bits):.4f} bits/weight")
