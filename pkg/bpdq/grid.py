# quantization grids: variable bit-plane grids, fixed templates and their feasible sets

# SPDX-License-Identifier: Apache-2.0

from collections import namedtuple
from functools import lru_cache
import itertools
import logging

import numpy as np

from .errors import OracleSizeError, PreconditionError

RATIO_TOL = 1e-9
MEMBERSHIP_MAX_G = 8
MEMBERSHIP_MAX_ASSIGNMENTS = 1 << 20

FixedGridWitness = namedtuple("FixedGridWitness", ["c0", "s", "assignment"])


class GridTemplate:
    def __init__(self, levels):
        self.levels = np.asarray(levels, dtype=np.float64).reshape(-1)
        assert self.levels.size >= 2, "a template needs at least two levels"
        assert np.all(np.diff(self.levels) > 0), f"template levels {self.levels} not strictly increasing"

    @classmethod
    def uniform(cls, bits):
        return cls(np.arange(1 << bits, dtype=np.float64))

    def __len__(self):
        return self.levels.size

    def __repr__(self):
        return f"GridTemplate({self.levels.tolist()})"


@lru_cache(maxsize=None)
def candidate_bits(k):
    """(2^k, k) table; row n holds the bits of n, column i-1 is b_i."""
    n = np.arange(1 << k)
    table = (n[:, None] >> np.arange(k)[None, :]) & 1
    table.setflags(write=False)
    return table


def combine_planes(c0, planes_coeffs, bits):
    """
    Evaluate c0 + sum_i c_i * b_i with the planes added in index order.

    c0 broadcasts against bits[..., 0]; planes_coeffs[..., i] pairs with
    bits[..., i]. Every caller goes through here so that solver blocks and
    dequantized layers agree bit for bit.
    """
    out = np.array(c0, dtype=np.float64, copy=True)
    for i in range(bits.shape[-1]):
        out = out + planes_coeffs[..., i] * bits[..., i]
    return out


def variable_levels(c):
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    k = c.size - 1
    assert k >= 1, "a variable grid needs at least one plane coefficient"
    bits = candidate_bits(k)
    return combine_planes(np.full(bits.shape[0], c[0]), np.broadcast_to(c[1:], bits.shape), bits)


def difference_ratio_set(t):
    lv = t.levels
    ratios = []
    for i, j, k in itertools.permutations(range(lv.size), 3):
        ratios.append((lv[i] - lv[j]) / (lv[i] - lv[k]))
    ratios.sort()
    dedup = []
    for r in ratios:
        if not dedup or abs(r - dedup[-1]) > RATIO_TOL:
            dedup.append(r)
    return tuple(dedup)


def ratio_in_set(r, ratios, tol=RATIO_TOL):
    return any(abs(r - x) <= tol for x in ratios)


def fixed_grid_membership(v, t):
    """
    Exhaustive test of v in {c0*1 + s*t[z]}.

    Returns the first witness in lexicographic assignment order, or None.
    For every assignment the (c0, s) pair is the two-parameter least-squares
    fit, accepted only at zero residual.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    g = v.size
    n_levels = len(t)
    if g > MEMBERSHIP_MAX_G or n_levels ** g > MEMBERSHIP_MAX_ASSIGNMENTS:
        raise OracleSizeError(f"membership oracle over {n_levels}^{g} assignments exceeds its budget (g <= {MEMBERSHIP_MAX_G})")

    tol = 1e-9 * (1.0 + float(np.max(np.abs(v))))
    assign = np.indices((n_levels,) * g).reshape(g, -1).T
    z = t.levels[assign]

    zbar = z.mean(axis=1)
    vbar = v.mean()
    zc = z - zbar[:, None]
    szz = np.einsum("ag,ag->a", zc, zc)
    szv = zc @ (v - vbar)
    flat = szz <= 1e-300
    s = np.where(flat, 0.0, szv / np.where(flat, 1.0, szz))
    c0 = vbar - s * zbar
    resid = np.max(np.abs(v[None, :] - (c0[:, None] + s[:, None] * z)), axis=1)

    hits = np.flatnonzero(resid <= tol)
    if hits.size == 0:
        return None
    a = hits[0]
    logging.debug(f"fixed-grid witness for {v.tolist()}: c0={c0[a]}, s={s[a]}, z={assign[a].tolist()}")
    return FixedGridWitness(float(c0[a]), float(s[a]), assign[a].copy())


def construct_counterexample(t, g, c1, c2):
    if g < 3:
        raise PreconditionError(f"counterexample needs g >= 3, got {g}")
    if c1 == 0 or c2 == 0 or c1 == c2:
        raise PreconditionError(f"coefficients must be distinct and nonzero, got c1={c1}, c2={c2}")
    ratios = difference_ratio_set(t)
    if ratio_in_set(c1 / c2, ratios):
        raise PreconditionError(f"ratio c1/c2={c1 / c2} lies in the template's difference-ratio set")
    v = np.zeros(g)
    v[1] = c1
    v[2] = c2
    return v
