# executable checks of the feasible-set propositions and the solver's consistency identities

# SPDX-License-Identifier: Apache-2.0

from dataclasses import dataclass, field
import logging

import numpy as np

from .bpd import init_group, rtn_codes
from .errors import SingularMatrixError
from .grid import (
    GridTemplate,
    construct_counterexample,
    difference_ratio_set,
    fixed_grid_membership,
    ratio_in_set,
    variable_levels,
)
from .kernel import QuantizedLayer, dequantize, lut_matvec, pack, unpack
from .linalg import (
    hessian_from_activations,
    solve_right_upper,
    solve_upper_transpose,
    wls_fit,
)
from .oracle import dense_wls, reference_column_argmin
from .solver import (
    GroupState,
    _bitplane_pass,
    bpdq_quantize_layer,
    hessian_objective,
    objective,
    quantize_column,
    refit_and_correct,
    solve_group,
)
from .tensorio import RunConfig, synth_layer


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    details: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.failed == 0

    def check(self, cond):
        if cond:
            self.passed += 1
        else:
            self.failed += 1


def random_local_factor(rng, g):
    # inverse-Cholesky factor of a well-scaled random PD local Hessian
    a = rng.standard_normal((g, 2 * g)) / np.sqrt(2 * g)
    return hessian_from_activations(a, percdamp=0.1).u


def local_error(block, q, u_loc):
    e = solve_right_upper(block - q, u_loc)
    return float(np.sum(e * e))


def suite_prop1(seed, n=100, d_out=8, g=16, k=2):
    res = SuiteResult("prop1")
    rng = np.random.default_rng(seed)

    for s in rng.uniform(0.01, 10.0, size=10):
        levels = np.sort(variable_levels([0.0, s, 2 * s]))
        res.check(np.allclose(levels, s * np.arange(4), rtol=1e-12, atol=0))

    worst = 0.0
    for _ in range(n):
        block = rng.standard_normal((d_out, g))
        u_loc = random_local_factor(rng, g)
        try:
            _, _, q, e = init_group(block, u_loc, k, alpha=0.0)
        except SingularMatrixError:
            logging.warning("undamped MSB-plane fit is singular on a prop1 instance")
            res.failed += 1
            continue
        codes = rtn_codes(block, k)
        q_rtn = codes.wmin[:, None] + codes.z * codes.scale[:, None]
        init_err = float(np.sum(e * e))
        rtn_err = local_error(block, q_rtn, u_loc)
        worst = max(worst, init_err - rtn_err)
        res.check(init_err <= rtn_err + 1e-9 * max(1.0, rtn_err))
    res.details["max_init_minus_rtn"] = worst
    return res


def suite_prop2(seed, g_values=(3, 4, 5), n=50):
    res = SuiteResult("prop2")
    rng = np.random.default_rng(seed)
    t = GridTemplate.uniform(2)
    ratios = difference_ratio_set(t)

    for g in g_values:
        made = 0
        while made < n:
            c1, c2 = rng.uniform(-5.0, 5.0, size=2)
            if min(abs(c1), abs(c2), abs(c1 - c2)) < 1e-3 or ratio_in_set(c1 / c2, ratios, tol=1e-6):
                continue
            v = construct_counterexample(t, g, c1, c2)
            res.check(fixed_grid_membership(v, t) is None)
            made += 1

        for s in rng.uniform(0.1, 5.0, size=n):
            v = np.zeros(g)
            v[1], v[2] = s, 2 * s
            w = fixed_grid_membership(v, t)
            if w is None:
                res.failed += 1
                continue
            x, y, z = w.c0 + w.s * t.levels[w.assignment[:3]]
            res.check(ratio_in_set((x - y) / (x - z), ratios))
    return res


def _full_rank_design(rng, g, k):
    while True:
        d = np.ones((g, k + 1))
        d[:, 1:] = rng.integers(0, 2, size=(g, k))
        if np.linalg.matrix_rank(d) == k + 1:
            return d


def suite_wls(seed, n=1000, perturbations=100):
    res = SuiteResult("wls")
    rng = np.random.default_rng(seed)
    worst_resid, worst_diff = 0.0, 0.0
    for i in range(n):
        g = (8, 16, 32)[i % 3]
        k = (1, 2, 3)[(i // 3) % 3]
        design = _full_rank_design(rng, g, k)
        target = rng.standard_normal(g)
        u_loc = random_local_factor(rng, g)

        c = wls_fit(design, target, u_loc, alpha=0.0)
        d = solve_upper_transpose(u_loc, design)
        tt = solve_upper_transpose(u_loc, target)
        resid = float(np.linalg.norm(d.T @ (d @ c - tt)))
        diff = float(np.max(np.abs(c - dense_wls(design, target, u_loc, 0.0))) / max(1.0, np.max(np.abs(c))))
        worst_resid, worst_diff = max(worst_resid, resid), max(worst_diff, diff)

        delta = rng.standard_normal((perturbations, k + 1))
        delta *= 1e-3 / np.linalg.norm(delta, axis=1, keepdims=True)
        base = float(np.sum((d @ c - tt) ** 2))
        moved = np.sum(((c + delta) @ d.T - tt) ** 2, axis=1)
        res.check(resid <= 1e-8 and diff <= 1e-10 and bool(np.all(moved >= base - 1e-12 * (1.0 + base))))
    res.details["max_normal_residual"] = worst_resid
    res.details["max_dense_discrepancy"] = worst_diff
    return res


def suite_column(seed, n=10000, tie="low"):
    res = SuiteResult("column")
    rng = np.random.default_rng(seed)
    ties = 0
    for i in range(n):
        k = 1 + i % 4
        if i % 5 == 0:
            # integer grids with half-integer values produce exact ties
            coeffs = rng.integers(-3, 4, size=k + 1).astype(np.float64)
            value = rng.integers(-12, 13) / 2.0
        else:
            coeffs = rng.standard_normal(k + 1)
            value = float(rng.normal(scale=2.0))
        bits, q = quantize_column(np.array([value]), coeffs[None, :], tie=tie)
        ref_bits, ref_q = reference_column_argmin(value, coeffs)
        errs = (value - variable_levels(coeffs)) ** 2
        chosen = int(bits[0] @ (1 << np.arange(k)))
        best = errs.min()
        if np.sum(errs == best) > 1:
            ties += 1
        res.check(errs[chosen] == best and tuple(int(b) for b in bits[0]) == ref_bits and q[0] == ref_q)
    res.details["tie_cases"] = ties
    return res


def suite_delta(seed, n_layers=20, d_out=16, d_in=128, g=32, k=2, n_samples=1024):
    res = SuiteResult("delta")
    cfg = RunConfig(k=k, g=g)
    worst_ident, worst_scratch = 0.0, 0.0
    for i in range(n_layers):
        w, x = synth_layer(seed + i, d_out, d_in, n_samples)
        hstate = hessian_from_activations(x, cfg.percdamp)
        _, report = bpdq_quantize_layer(w, hstate, cfg, x=x)
        e = report.error_coords
        ident = float(np.linalg.norm(w - report.dequantized - e @ hstate.u) / np.linalg.norm(w))
        scratch = solve_right_upper(w - report.dequantized, hstate.u)
        rel = float(np.linalg.norm(scratch - e) / max(np.linalg.norm(e), 1e-300))
        worst_ident, worst_scratch = max(worst_ident, ident), max(worst_scratch, rel)
        res.check(ident <= 1e-8 and rel <= 1e-10)

        # one bit-plane pass + refit on the first group, corrected versus recomputed
        block = w[:, :g]
        u_loc = hstate.u[:g, :g]
        _, coeffs, _, _ = init_group(block, u_loc, k, cfg.alpha)
        planes, q, e_pass = _bitplane_pass(block, coeffs, u_loc)
        state = refit_and_correct(
            GroupState(block, planes, coeffs, q, e_pass, float(np.sum(e_pass ** 2))), u_loc, cfg.alpha
        )
        recomputed = solve_right_upper(block - state.q, u_loc)
        res.check(np.linalg.norm(recomputed - state.e) <= 1e-10 * max(np.linalg.norm(state.e), 1e-300))
    res.details["max_identity_residual"] = worst_ident
    res.details["max_scratch_discrepancy"] = worst_scratch
    return res


def suite_retention(seed, n=20, d_out=8, g=32, k=2):
    res = SuiteResult("retention")
    rng = np.random.default_rng(seed)
    cfg = RunConfig(k=k, g=g, alpha=0.0)
    eye = np.eye(g)
    for _ in range(n):
        block = rng.standard_normal((d_out, g))
        state = solve_group(block, eye, cfg)
        h = np.asarray(state.history)
        monotone = bool(np.all(h[1:] <= h[:-1] + 1e-12 * (1.0 + h[:-1])))
        res.check(monotone and state.score <= state.init_score + 1e-12)

    cfg = RunConfig(k=k, g=g)
    for _ in range(n):
        block = rng.standard_normal((d_out, g))
        state = solve_group(block, random_local_factor(rng, g), cfg)
        res.check(state.score <= state.init_score + 1e-12 and state.score == min(state.history))
    return res


def suite_objective(seed, n=100):
    res = SuiteResult("objective")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        w = rng.standard_normal((4, 8))
        q = w + 0.1 * rng.standard_normal((4, 8))
        x = rng.standard_normal((8, 16))
        frob, trace = objective(w, q, x)
        via_h = hessian_objective(w, q, hessian_from_activations(x, percdamp=0.0).h)
        rel = max(abs(frob - trace), abs(frob - via_h)) / max(frob, 1e-300)
        worst = max(worst, rel)
        res.check(rel <= 1e-10)
    res.details["max_relative_gap"] = worst
    return res


def random_layer(rng, coeff_bits=64):
    k = int(rng.integers(1, 5))
    g = int(rng.choice([4, 8, 12, 16]))
    d_in = g * int(rng.integers(1, 5))
    d_out = int(rng.integers(1, 9))
    bits = rng.integers(0, 2, size=(k, d_out, d_in))
    coeffs = rng.standard_normal((d_in // g, d_out, k + 1))
    return QuantizedLayer.from_planes(bits, coeffs, g, coeff_bits)


def suite_kernel(seed, n=100):
    res = SuiteResult("kernel")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        layer = random_layer(rng)
        x = rng.standard_normal(layer.d_in)
        dense = dequantize(layer) @ x
        y = lut_matvec(layer, x)
        rel = float(np.max(np.abs(y - dense)) / max(np.max(np.abs(dense)), 1e-300))
        worst = max(worst, rel)
        raw = pack(layer)
        res.check(rel <= 1e-12 and pack(unpack(raw)) == raw)
    res.details["max_relative_deviation"] = worst
    return res


SUITES = {
    "prop1": suite_prop1,
    "prop2": suite_prop2,
    "wls": suite_wls,
    "column": suite_column,
    "delta": suite_delta,
    "retention": suite_retention,
    "objective": suite_objective,
    "kernel": suite_kernel,
}


def run_suites(names=None, seed=0, prop2_g=None, tie="low"):
    results = []
    for name in names or SUITES:
        if name == "prop2" and prop2_g is not None:
            r = suite_prop2(seed, g_values=(prop2_g,))
        elif name == "column":
            r = suite_column(seed, tie=tie)
        else:
            r = SUITES[name](seed)
        level = logging.INFO if r.ok else logging.ERROR
        logging.log(level, f"suite {r.name}: {r.passed} passed, {r.failed} failed, {r.skipped} skipped")
        results.append(r)
    return results
