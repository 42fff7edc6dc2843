# layer solvers: BPDQ variable-grid solver, GPTQ and RTN fixed-grid baselines

# SPDX-License-Identifier: Apache-2.0

from collections import namedtuple
from dataclasses import dataclass, field, replace
import logging
import time

import numpy as np

from .bpd import (
    design_matrices,
    dequantize_group,
    init_group,
    round_half_away,
    rtn_codes,
)
from .errors import ConfigError, ShapeError
from .grid import candidate_bits, combine_planes
from .kernel import QuantizedLayer
from .linalg import solve_right_upper, wls_fit_rows
from .tensorio import as_tensor2d

Objective = namedtuple("Objective", ["frob", "trace"])


@dataclass
class GroupState:
    snapshot: np.ndarray
    planes: np.ndarray
    coeffs: np.ndarray
    q: np.ndarray
    e: np.ndarray
    score: float
    history: tuple = ()

    @property
    def init_score(self):
        return self.history[0] if self.history else self.score


@dataclass
class SolveReport:
    objective_frob: float
    objective_trace: float
    per_group_scores: list
    per_group_init_scores: list
    iterations_used: int
    wall_time: float
    error_coords: np.ndarray = field(default=None, repr=False)
    dequantized: np.ndarray = field(default=None, repr=False)


def objective(w, q, x):
    """Output reconstruction error |(W - Q) X|_F^2 and its trace form with H = XX^T."""
    d = as_tensor2d(w) - as_tensor2d(q)
    x = as_tensor2d(x, "activations")
    if d.shape[1] != x.shape[0]:
        raise ShapeError(f"weights have {d.shape[1]} columns but activations have {x.shape[0]} rows")
    dx = d @ x
    h = x @ x.T
    return Objective(float(np.sum(dx * dx)), float(np.sum((d @ h) * d)))


def hessian_objective(w, q, h):
    d = as_tensor2d(w) - as_tensor2d(q)
    return float(np.sum((d @ h) * d))


def quantize_column(values, coeffs, tie="low"):
    """
    Nearest variable-grid level for every row of a column.

    Returns (bits, q) with bits of shape (rows, k). Ties go to the lowest
    candidate index; tie="high" flips that and exists only for negative
    controls.
    """
    values = np.asarray(values, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    k = coeffs.shape[1] - 1
    table = candidate_bits(k)
    levels = combine_planes(
        np.broadcast_to(coeffs[:, None, 0], (coeffs.shape[0], table.shape[0])),
        np.broadcast_to(coeffs[:, None, 1:], (coeffs.shape[0],) + table.shape),
        np.broadcast_to(table, (coeffs.shape[0],) + table.shape),
    )
    err = (values[:, None] - levels) ** 2
    if tie == "low":
        idx = np.argmin(err, axis=1)
    else:
        idx = err.shape[1] - 1 - np.argmin(err[:, ::-1], axis=1)
    rows = np.arange(values.size)
    return table[idx].astype(np.uint8), levels[rows, idx]


def propagate_column(working, e_col, u_row_segment):
    """working -= e_col (x) u_row_segment, in place; working is the not-yet-quantized tail."""
    working -= np.outer(e_col, u_row_segment)


def _bitplane_pass(snapshot, coeffs, u_loc):
    rows, g = snapshot.shape
    k = coeffs.shape[1] - 1
    working = snapshot.copy()
    planes = np.zeros((k, rows, g), dtype=np.uint8)
    q = np.zeros_like(snapshot)
    e = np.zeros_like(snapshot)
    for l in range(g):
        bits, q_col = quantize_column(working[:, l], coeffs)
        e_col = (working[:, l] - q_col) / u_loc[l, l]
        propagate_column(working[:, l + 1:], e_col, u_loc[l, l + 1:])
        planes[:, :, l] = bits.T
        q[:, l] = q_col
        e[:, l] = e_col
    return planes, q, e


def refit_and_correct(state, u_loc, alpha):
    coeffs = wls_fit_rows(design_matrices(state.planes), state.snapshot, u_loc, alpha)
    q_new = dequantize_group(state.planes, coeffs)
    delta = solve_right_upper(state.q - q_new, u_loc)
    e = state.e + delta
    return replace(state, coeffs=coeffs, q=q_new, e=e, score=float(np.sum(e * e)))


def solve_group(snapshot, u_loc, cfg):
    """
    Alternate bit-plane updates and coefficient refits on one group and
    keep the candidate with the smallest |E|_F^2.

    Every round restarts from the group-entry snapshot; the returned state's
    history holds the score of the initialization followed by each round.
    """
    snapshot = np.asarray(snapshot, dtype=np.float64)
    planes, coeffs, q, e = init_group(snapshot, u_loc, cfg.k, cfg.alpha, cfg.rtn_init)
    current = GroupState(snapshot, planes, coeffs, q, e, float(np.sum(e * e)))
    best = current
    history = [current.score]

    for it in range(cfg.iters):
        if best.score == 0.0:
            break
        planes, q, e = _bitplane_pass(snapshot, current.coeffs, u_loc)
        current = refit_and_correct(
            GroupState(snapshot, planes, current.coeffs, q, e, float(np.sum(e * e))),
            u_loc,
            cfg.alpha,
        )
        history.append(current.score)
        if current.score < best.score:
            best = current

    assert best.score <= history[0] + 1e-12, f"retained score {best.score} exceeds init score {history[0]}"
    return replace(best, history=tuple(history))


def _check_layer(w, hstate, g):
    if w.shape[1] != hstate.u.shape[0]:
        raise ShapeError(f"weights have {w.shape[1]} columns but the Hessian is {hstate.u.shape[0]}x{hstate.u.shape[0]}")
    if w.shape[1] % g != 0:
        raise ConfigError(f"group size g={g} does not divide d_in={w.shape[1]}")


def _report_objectives(w, q, hstate, x):
    if x is not None:
        return objective(w, q, x)
    frob = hessian_objective(w, q, hstate.undamped())
    return Objective(frob, frob)


def bpdq_quantize_layer(w, hstate, cfg, x=None):
    """
    Quantize a layer group by group in natural column order.

    Each group is solved against its working block, then the retained
    error coordinates are propagated once into the tail columns.
    Returns (QuantizedLayer, SolveReport).
    """
    t0 = time.perf_counter()
    w = as_tensor2d(w, "weights")
    cfg.validate(w.shape[1])
    _check_layer(w, hstate, cfg.g)
    d_out, d_in = w.shape
    u = hstate.u

    working = w.copy()
    bits = np.zeros((cfg.k, d_out, d_in), dtype=np.uint8)
    coeffs = np.zeros((d_in // cfg.g, d_out, cfg.k + 1))
    q = np.zeros_like(w)
    e = np.zeros_like(w)
    scores, init_scores = [], []
    iterations = 0

    for gi, s in enumerate(range(0, d_in, cfg.g)):
        block = slice(s, s + cfg.g)
        best = solve_group(working[:, block], u[block, block], cfg)
        bits[:, :, block] = best.planes
        coeffs[gi] = best.coeffs
        q[:, block] = best.q
        e[:, block] = best.e
        working[:, s + cfg.g:] -= best.e @ u[block, s + cfg.g:]
        scores.append(best.score)
        init_scores.append(best.init_score)
        iterations += len(best.history) - 1
        logging.debug(f"group {gi}: init {best.init_score:.6g} -> best {best.score:.6g} after {len(best.history) - 1} rounds")

    layer = QuantizedLayer.from_planes(bits, coeffs, cfg.g, cfg.coeff_bits)
    frob, trace = _report_objectives(w, q, hstate, x)
    report = SolveReport(
        objective_frob=frob,
        objective_trace=trace,
        per_group_scores=scores,
        per_group_init_scores=init_scores,
        iterations_used=iterations,
        wall_time=time.perf_counter() - t0,
        error_coords=e,
        dequantized=q,
    )
    logging.info(f"BPDQ k={cfg.k} g={cfg.g}: {d_out}x{d_in} layer, objective {frob:.6g}, {iterations} refinement rounds in {report.wall_time:.2f}s")
    return layer, report


def _affine_quantize(values, wmin, span, maxq):
    flat = span == 0
    safe = np.where(flat, 1.0, span)
    z = np.clip(round_half_away((values - wmin) * maxq / safe), 0, maxq)
    z = np.where(flat, 0.0, z)
    return wmin + z * np.where(flat, 1.0, span / maxq)


def _check_bits(bits):
    if not 2 <= bits <= 8:
        raise ConfigError(f"baseline width bits={bits} outside 2..8")


def rtn_quantize_layer(w, bits, g):
    _check_bits(bits)
    w = as_tensor2d(w, "weights")
    d_out, d_in = w.shape
    if d_in % g != 0:
        raise ConfigError(f"group size g={g} does not divide d_in={d_in}")
    maxq = (1 << bits) - 1
    blocks = w.reshape(d_out, d_in // g, g)
    wmin = blocks.min(axis=2, keepdims=True)
    span = blocks.max(axis=2, keepdims=True) - wmin
    return _affine_quantize(blocks, wmin, span, maxq).reshape(d_out, d_in)


def gptq_quantize_layer(w, hstate, bits, g, x=None):
    """
    Fixed-grid GPTQ baseline: per-(row, group) affine grid frozen at group
    entry from the working weights, column-wise error coordinates and
    full-tail compensation.
    """
    t0 = time.perf_counter()
    _check_bits(bits)
    w = as_tensor2d(w, "weights")
    _check_layer(w, hstate, g)
    d_out, d_in = w.shape
    u = hstate.u
    maxq = (1 << bits) - 1

    working = w.copy()
    q = np.zeros_like(w)
    e = np.zeros_like(w)
    scores = []
    for s in range(0, d_in, g):
        block = working[:, s:s + g]
        wmin = block.min(axis=1)
        span = block.max(axis=1) - wmin
        for l in range(s, s + g):
            q[:, l] = _affine_quantize(working[:, l], wmin, span, maxq)
            e[:, l] = (working[:, l] - q[:, l]) / u[l, l]
            propagate_column(working[:, l + 1:], e[:, l], u[l, l + 1:])
        scores.append(float(np.sum(e[:, s:s + g] ** 2)))

    frob, trace = _report_objectives(w, q, hstate, x)
    report = SolveReport(
        objective_frob=frob,
        objective_trace=trace,
        per_group_scores=scores,
        per_group_init_scores=list(scores),
        iterations_used=0,
        wall_time=time.perf_counter() - t0,
        error_coords=e,
        dequantized=q,
    )
    logging.info(f"GPTQ b={bits} g={g}: {d_out}x{d_in} layer, objective {frob:.6g}")
    return q, report
