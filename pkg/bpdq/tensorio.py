# TNSR tensor files, synthetic calibration data and run configuration

# SPDX-License-Identifier: Apache-2.0

from dataclasses import asdict, dataclass
import logging
from pathlib import Path
from typing import Optional
import struct

import numpy as np

from .errors import (
    ConfigError,
    FormatError,
    NonFiniteError,
    ShapeError,
    TensorIOError,
    TruncatedError,
)

# magic, version, dtype, rank, rows, cols
TNSR_HEADER = struct.Struct("<4sIBBQQ")
TNSR_MAGIC = b"TNSR"
TNSR_VERSION = 1
TNSR_DTYPES = {
    0: np.dtype("<f8"),
    1: np.dtype("<f4"),
}


@dataclass
class RunConfig:
    k: int = 2
    g: int = 64
    iters: int = 10
    alpha: float = 1e-4
    percdamp: float = 1e-2
    seed: int = 0
    coeff_bits: int = 16
    tail_index: float = 0.0
    n_samples: Optional[int] = None
    rtn_init: bool = False

    def validate(self, d_in=None):
        if not 1 <= self.k <= 8:
            raise ConfigError(f"plane count k={self.k} outside 1..8")
        if self.g < self.k + 1:
            raise ConfigError(f"group size g={self.g} must be at least k+1={self.k + 1}")
        if self.iters < 0:
            raise ConfigError(f"iters={self.iters} must be non-negative")
        if self.alpha < 0:
            raise ConfigError(f"alpha={self.alpha} must be non-negative")
        if self.percdamp < 0:
            raise ConfigError(f"percdamp={self.percdamp} must be non-negative")
        if self.coeff_bits not in (16, 32, 64):
            raise ConfigError(f"coeff_bits={self.coeff_bits} not one of 16, 32, 64")
        if self.tail_index < 0:
            raise ConfigError(f"tail_index={self.tail_index} must be non-negative")
        if self.n_samples is not None and self.n_samples < 1:
            raise ConfigError(f"n_samples={self.n_samples} must be positive")
        if d_in is not None and d_in % self.g != 0:
            raise ConfigError(f"group size g={self.g} does not divide d_in={d_in}")
        return self

    def samples_for(self, d_in):
        return self.n_samples if self.n_samples is not None else 8 * d_in

    def as_dict(self):
        return asdict(self)


def as_tensor2d(a, name="tensor"):
    """Coerce to a C-ordered 2-D float64 array, the in-memory Tensor2D."""
    t = np.ascontiguousarray(a, dtype=np.float64)
    if t.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {t.shape}")
    return t


def save_tensor(t, path, dtype=0):
    t = as_tensor2d(t)
    if dtype not in TNSR_DTYPES:
        raise FormatError(f"unknown TNSR dtype code {dtype}")
    rows, cols = t.shape
    header = TNSR_HEADER.pack(TNSR_MAGIC, TNSR_VERSION, dtype, 2, rows, cols)
    payload = t.astype(TNSR_DTYPES[dtype]).tobytes(order="C")
    p = Path(path)
    try:
        p.write_bytes(header + payload)
    except OSError as e:
        raise TensorIOError(p, f"cannot write tensor ({e.strerror or e})") from e
    logging.debug(f"wrote {rows}x{cols} tensor to {p}")


def load_tensor(path):
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as e:
        raise TensorIOError(p, f"cannot read tensor ({e.strerror or e})") from e

    if len(raw) < TNSR_HEADER.size:
        if raw[:4] != TNSR_MAGIC[:len(raw[:4])]:
            raise FormatError(f"{p}: not a TNSR file")
        raise TruncatedError(f"{p}: header truncated at {len(raw)} bytes")
    magic, version, dtype, rank, rows, cols = TNSR_HEADER.unpack_from(raw)
    if magic != TNSR_MAGIC:
        raise FormatError(f"{p}: bad magic {magic!r}")
    if version != TNSR_VERSION:
        raise FormatError(f"{p}: unsupported TNSR version {version}")
    if dtype not in TNSR_DTYPES:
        raise FormatError(f"{p}: unknown dtype code {dtype}")
    if rank != 2:
        raise FormatError(f"{p}: rank {rank} tensors are not supported")

    dt = TNSR_DTYPES[dtype]
    expected = rows * cols * dt.itemsize
    payload = raw[TNSR_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedError(f"{p}: declared {rows}x{cols} needs {expected} payload bytes, found {len(payload)}")
    if len(payload) > expected:
        raise FormatError(f"{p}: {len(payload) - expected} trailing bytes after payload")

    t = np.frombuffer(payload, dtype=dt).astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(t)):
        raise NonFiniteError(f"{p}: payload contains NaN or Inf")
    return t


def channel_scales(rng, d_in, tail_index):
    # Pareto-type scales u^(-tail_index) with u in (0, 1]
    if tail_index == 0:
        return np.ones(d_in)
    u = 1.0 - rng.random(d_in)
    return u ** (-tail_index)


def synth_layer(seed, d_out, d_in, n_samples, tail_index=0.0):
    """
    Seeded stand-in for a calibrated linear layer.

    W is standard Gaussian (d_out x d_in); X (d_in x n_samples) is Gaussian
    with per-channel scales whose tail heaviness grows with tail_index.
    """
    if min(d_out, d_in, n_samples) < 1:
        raise ConfigError(f"synthetic dims must be positive, got d_out={d_out} d_in={d_in} n={n_samples}")
    if tail_index < 0:
        raise ConfigError(f"tail_index={tail_index} must be non-negative")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((d_out, d_in))
    scales = channel_scales(rng, d_in, tail_index)
    x = scales[:, None] * rng.standard_normal((d_in, n_samples))
    return w, x
