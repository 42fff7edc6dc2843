# bit-plane decomposition initialization of a column group

# SPDX-License-Identifier: Apache-2.0

from dataclasses import dataclass
import logging

import numpy as np

from .errors import SingularMatrixError
from .grid import combine_planes
from .linalg import solve_right_upper, wls_fit_rows


@dataclass
class IntCodes:
    z: np.ndarray
    wmin: np.ndarray
    scale: np.ndarray
    bits: int = 8


def round_half_away(a):
    return np.sign(a) * np.floor(np.abs(a) + 0.5)


def rtn_codes(group, bits):
    """
    Per-row affine round-to-nearest codes of a (rows x g) block.

    Degenerate rows (max == min) get scale 1 and all-zero codes.
    """
    group = np.asarray(group, dtype=np.float64)
    maxq = (1 << bits) - 1
    wmin = group.min(axis=1)
    span = group.max(axis=1) - wmin
    flat = span == 0
    safe = np.where(flat, 1.0, span)
    z = round_half_away((group - wmin[:, None]) * maxq / safe[:, None])
    z = np.clip(z, 0, maxq)
    z[flat] = 0
    scale = np.where(flat, 1.0, span / maxq)
    return IntCodes(z=z.astype(np.uint8), wmin=wmin, scale=scale, bits=bits)


def rtn_int8(group):
    return rtn_codes(group, 8)


def bit_plane_decompose(codes):
    """Planes P_0..P_7 stacked on axis 0; sum_i 2^i P_i == z."""
    shifts = np.arange(codes.bits, dtype=np.uint8)
    return (codes.z[None, :, :] >> shifts[:, None, None]) & 1


def select_msb_planes(planes, k):
    assert 1 <= k <= planes.shape[0], f"cannot keep {k} of {planes.shape[0]} planes"
    # B_i = P_{7-k+i}, i = 1..k
    return planes[planes.shape[0] - k:]


def design_matrices(planes):
    """(rows, g, k+1) designs [1 | B_1 | ... | B_k] for every row."""
    k, rows, g = planes.shape
    d = np.ones((rows, g, k + 1))
    d[:, :, 1:] = planes.transpose(1, 2, 0)
    return d


def dequantize_group(planes, coeffs):
    """q[r, j] = c0[r] + sum_i c_i[r] * B_i[r, j]."""
    bits = planes.transpose(1, 2, 0)
    return combine_planes(
        np.broadcast_to(coeffs[:, None, 0], bits.shape[:2]),
        np.broadcast_to(coeffs[:, None, 1:], bits.shape),
        bits,
    )


def local_row_errors(residual, u_loc):
    """Per-row |U_loc^-T r|^2 of a (rows x g) residual block."""
    e = solve_right_upper(residual, u_loc)
    return np.einsum("rg,rg->r", e, e)


def _fit_candidate(planes, snapshot, u_loc, alpha):
    designs = design_matrices(planes)
    p = designs.shape[2]
    rows = designs.shape[0]
    coeffs = np.full((rows, p), np.nan)
    ok = np.ones(rows, dtype=bool)
    if alpha == 0:
        ok = np.linalg.matrix_rank(designs) == p
    if np.any(ok):
        coeffs[ok] = wls_fit_rows(designs[ok], snapshot[ok], u_loc, alpha)
    errs = np.full(rows, np.inf)
    if np.any(ok):
        q = dequantize_group(planes[:, ok], coeffs[ok])
        errs[ok] = local_row_errors(snapshot[ok] - q, u_loc)
    return coeffs, errs


def init_group(snapshot, u_loc, k, alpha, rtn_candidate=False):
    """
    Initial planes, coefficients, dequantized block and error coordinates
    for one group.

    Planes are the k MSB planes of each row's 8-bit RTN code, with
    coefficients fitted in the local metric. With rtn_candidate each row
    also fits the planes of its k-bit RTN code and keeps the better set.
    """
    snapshot = np.asarray(snapshot, dtype=np.float64)
    msb = select_msb_planes(bit_plane_decompose(rtn_int8(snapshot)), k)
    msb_coeffs, msb_errs = _fit_candidate(msb, snapshot, u_loc, alpha)

    if not rtn_candidate:
        dead = np.isinf(msb_errs)
        if np.any(dead):
            raise SingularMatrixError(f"{int(dead.sum())} row(s) have a rank-deficient MSB plane design with alpha=0")
        q = dequantize_group(msb, msb_coeffs)
        return msb, msb_coeffs, q, solve_right_upper(snapshot - q, u_loc)

    uniform = bit_plane_decompose(rtn_codes(snapshot, k))
    uni_coeffs, uni_errs = _fit_candidate(uniform, snapshot, u_loc, alpha)

    dead = np.isinf(msb_errs) & np.isinf(uni_errs)
    if np.any(dead):
        raise SingularMatrixError(f"{int(dead.sum())} row(s) have no full-rank plane candidate with alpha=0")

    use_uni = uni_errs < msb_errs
    planes = np.where(use_uni[None, :, None], uniform, msb).astype(np.uint8)
    coeffs = np.where(use_uni[:, None], uni_coeffs, msb_coeffs)
    if np.any(use_uni):
        logging.debug(f"uniform-code planes kept for {int(use_uni.sum())}/{use_uni.size} rows")

    q = dequantize_group(planes, coeffs)
    e = solve_right_upper(snapshot - q, u_loc)
    return planes, coeffs, q, e
