# Hessian construction, triangular solves and the Hessian-metric least-squares fit

# SPDX-License-Identifier: Apache-2.0

from dataclasses import dataclass
import logging

import numpy as np
import scipy.linalg

from .errors import ShapeError, SingularHessianError, SingularMatrixError
from .tensorio import as_tensor2d


@dataclass
class HessianState:
    h: np.ndarray
    u: np.ndarray
    damp_lambda: float

    @property
    def d_in(self):
        return self.h.shape[0]

    def undamped(self):
        return self.h - self.damp_lambda * np.eye(self.d_in)


def hessian_from_activations(x, percdamp=0.01):
    """
    Build H = XX^T + lambda*I with lambda = percdamp * mean(diag(XX^T)),
    together with its inverse-Cholesky factor U (H^-1 = U^T U).
    """
    x = as_tensor2d(x, "activations")
    if x.shape[1] < 1:
        raise ShapeError("activations need at least one sample column")
    h = x @ x.T
    h = (h + h.T) / 2
    damp = percdamp * float(np.mean(np.diag(h)))
    h[np.diag_indices_from(h)] += damp
    if np.any(np.diag(h) <= 0):
        raise SingularHessianError(f"Hessian has {int(np.sum(np.diag(h) <= 0))} non-positive diagonal entries (percdamp={percdamp})")
    u = inverse_cholesky_factor(h)
    logging.debug(f"Hessian {h.shape[0]}x{h.shape[0]} built from {x.shape[1]} samples, damping {damp:.3e}")
    return HessianState(h=h, u=u, damp_lambda=damp)


def inverse_cholesky_factor(h):
    h = as_tensor2d(h, "Hessian")
    if h.shape[0] != h.shape[1]:
        raise ShapeError(f"Hessian must be square, got {h.shape}")
    try:
        low = scipy.linalg.cholesky(h, lower=True)
        hinv = scipy.linalg.cho_solve((low, True), np.eye(h.shape[0]))
        hinv = (hinv + hinv.T) / 2
        u = scipy.linalg.cholesky(hinv, lower=False)
    except np.linalg.LinAlgError as e:
        raise SingularHessianError(f"singular Hessian: {e}") from e
    return u


def _check_upper(u_loc):
    u_loc = np.asarray(u_loc, dtype=np.float64)
    if u_loc.ndim != 2 or u_loc.shape[0] != u_loc.shape[1]:
        raise ShapeError(f"local factor must be square, got {u_loc.shape}")
    if np.any(np.diag(u_loc) == 0):
        raise SingularMatrixError("triangular factor has a zero diagonal entry")
    return u_loc


def solve_upper_transpose(u_loc, rhs):
    """Forward substitution: return Y with U_loc^T Y = rhs."""
    u_loc = _check_upper(u_loc)
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != u_loc.shape[0]:
        raise ShapeError(f"rhs has {rhs.shape[0]} rows, factor is {u_loc.shape[0]}x{u_loc.shape[0]}")
    return scipy.linalg.solve_triangular(u_loc, rhs, trans="T", lower=False)


def solve_right_upper(m, u_loc):
    """Return dE with dE U_loc = m."""
    m = np.asarray(m, dtype=np.float64)
    return solve_upper_transpose(u_loc, m.T).T


def wls_fit_rows(designs, targets, u_loc, alpha):
    """
    Row-batched Hessian-metric least squares.

    designs is (rows, g, k+1), targets is (rows, g). Each row r gets
    argmin_c |U_loc^-T (designs[r] c - targets[r])|^2 + alpha |c|^2.
    """
    designs = np.asarray(designs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    rows, g, p = designs.shape
    if targets.shape != (rows, g):
        raise ShapeError(f"targets shape {targets.shape} does not match designs {designs.shape}")
    if alpha == 0:
        ranks = np.linalg.matrix_rank(designs)
        bad = np.flatnonzero(ranks < p)
        if bad.size:
            raise SingularMatrixError(f"rank-deficient design in {bad.size} row(s) (first: row {bad[0]}) with alpha=0")

    # one triangular solve for every design column and target of every row
    stacked = np.concatenate([designs.transpose(1, 0, 2).reshape(g, rows * p), targets.T], axis=1)
    solved = solve_upper_transpose(u_loc, stacked)
    d = solved[:, :rows * p].reshape(g, rows, p).transpose(1, 0, 2)
    t = solved[:, rows * p:].T

    gram = np.einsum("rgi,rgj->rij", d, d) + alpha * np.eye(p)
    rhs = np.einsum("rgi,rg->ri", d, t)
    try:
        return np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(f"normal equations are singular: {e}") from e


def wls_fit(design, target, u_loc, alpha):
    design = np.asarray(design, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    return wls_fit_rows(design[None], target[None], u_loc, alpha)[0]
