# brute-force references for tests and theory checks; the solver never calls these

# SPDX-License-Identifier: Apache-2.0

from collections import namedtuple
import logging

import numpy as np
import scipy.linalg

from .errors import OracleSizeError, SingularMatrixError

GROUP_ORACLE_BUDGET = 1 << 20
CHUNK_ASSIGNMENTS = 1 << 14

GroupOptimum = namedtuple("GroupOptimum", ["assignment", "error"])


def _level(coeffs, n):
    q = float(coeffs[0])
    for i in range(len(coeffs) - 1):
        q = q + float(coeffs[i + 1]) * ((n >> i) & 1)
    return q


def reference_column_argmin(value, coeffs):
    """Scan candidates n = 0 .. 2^k-1 in order; the first strict minimum wins."""
    coeffs = [float(c) for c in coeffs]
    k = len(coeffs) - 1
    best_bits, best_q, best_err = None, None, None
    for n in range(1 << k):
        bits = tuple((n >> i) & 1 for i in range(k))
        q = _level(coeffs, n)
        d = value - q
        err = d * d
        if best_err is None or err < best_err:
            best_bits, best_q, best_err = bits, q, err
    return best_bits, best_q


def brute_force_group_optimum(w_row, coeffs, u_loc):
    """
    Exact nearest point of the row's variable grid under the U_loc^-T metric.

    Returns the per-column candidate indices and the squared error.
    """
    w_row = np.asarray(w_row, dtype=np.float64).reshape(-1)
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    g = w_row.size
    k = coeffs.size - 1
    n_levels = 1 << k
    total = n_levels ** g
    if total > GROUP_ORACLE_BUDGET:
        raise OracleSizeError(f"(2^{k})^{g} = {total} assignments exceed the oracle budget of {GROUP_ORACLE_BUDGET}")

    levels = np.array([_level(coeffs, n) for n in range(n_levels)])
    best_idx, best_err = None, np.inf
    for start in range(0, total, CHUNK_ASSIGNMENTS):
        flat = np.arange(start, min(start + CHUNK_ASSIGNMENTS, total))
        assign = np.stack(np.unravel_index(flat, (n_levels,) * g), axis=1)
        resid = levels[assign] - w_row[None, :]
        t = scipy.linalg.solve_triangular(u_loc, resid.T, trans="T", lower=False)
        err = np.einsum("ga,ga->a", t, t)
        a = int(np.argmin(err))
        if err[a] < best_err:
            best_idx, best_err = assign[a].copy(), float(err[a])
    return GroupOptimum(best_idx, best_err)


def dense_wls(design, target, u_loc, alpha):
    """Weighted least squares through explicit inverses of U_loc^T and the damped Gram matrix."""
    design = np.asarray(design, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    p = design.shape[1]
    if alpha == 0 and np.linalg.matrix_rank(design) < p:
        raise SingularMatrixError("rank-deficient design with alpha=0")
    winv = np.linalg.inv(np.asarray(u_loc, dtype=np.float64).T)
    d = winv @ design
    t = winv @ target
    gram = d.T @ d + alpha * np.eye(p)
    return np.linalg.inv(gram) @ (d.T @ t)


def solver_gap(solver_errors, oracle_errors):
    gaps = np.asarray(solver_errors) - np.asarray(oracle_errors)
    logging.info(f"sequential solver gap to the exhaustive optimum: mean {gaps.mean():.3e}, max {gaps.max():.3e} over {gaps.size} rows")
    return gaps
