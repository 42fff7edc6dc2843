# command implementations behind main.py

# SPDX-License-Identifier: Apache-2.0

import logging
from pathlib import Path
import time

import numpy as np

from .errors import (
    BpdqError,
    ConfigError,
    FormatError,
    NumericalError,
    OracleSizeError,
    PreconditionError,
    ShapeError,
    TensorIOError,
)
from .jsondump import Report, gen_jsondump
from .kernel import (
    bits_per_weight,
    bits_per_weight_fixed,
    dequantize,
    log_layer,
    lut_matvec,
    lut_op_counts,
    pack,
    unpack,
)
from .linalg import hessian_from_activations
from .outliers import outlier_stats_many, relative_change
from .solver import bpdq_quantize_layer, gptq_quantize_layer, objective, rtn_quantize_layer
from .summary import gen_summary
from .tensorio import load_tensor, save_tensor, synth_layer
from .theory import run_suites

EXIT_OK = 0
EXIT_SUITE_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

COMPARE_DEFAULT_DIMS = (32, 256)
BENCH_DEFAULT_DIMS = (128, 512)


def load_inputs(cfg, rc):
    """(W, [X, ...]) from --synth or from --weights/--calib files."""
    if cfg.synth:
        seed, d_out, d_in, n = cfg.synth
        w, x = synth_layer(seed, d_out, d_in, n, rc.tail_index)
        return w, [x]
    w = load_tensor(cfg.weights)
    xs = [load_tensor(p) for p in cfg.calib]
    for p, x in zip(cfg.calib, xs):
        if x.shape[0] != w.shape[1]:
            raise ShapeError(f"{p}: activations have {x.shape[0]} rows but weights have {w.shape[1]} columns")
    return w, xs


def read_layer(path):
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as e:
        raise TensorIOError(p, f"cannot read quantized layer ({e.strerror or e})") from e
    try:
        return unpack(raw)
    except FormatError as e:
        raise type(e)(f"{p}: {e}") from e


def write_layer(layer, path):
    p = Path(path)
    try:
        p.write_bytes(pack(layer))
    except OSError as e:
        raise TensorIOError(p, f"cannot write quantized layer ({e.strerror or e})") from e
    logging.info(f"quantized layer written to {p}")


def finish(report, cfg, wall_time, template=None):
    report.wall_time_s = wall_time
    if cfg.report:
        gen_jsondump(report, cfg.report)
    if cfg.summary and template:
        gen_summary(report, cfg.summary, cfg, template)
    return report


def cmd_quantize(cfg):
    rc = cfg.run_config
    w, xs = load_inputs(cfg, rc)
    rc.validate(w.shape[1])
    x = np.hstack(xs)
    hstate = hessian_from_activations(x, rc.percdamp)
    layer, rep = bpdq_quantize_layer(w, hstate, rc, x=x)
    log_layer(layer)
    if cfg.output:
        write_layer(layer, cfg.output)

    report = Report(
        "quantize", rc.as_dict(), rc.seed,
        d_out=w.shape[0],
        d_in=w.shape[1],
        bpw=bits_per_weight(rc.k, rc.g, rc.coeff_bits),
        objective_frob=rep.objective_frob,
        objective_trace=rep.objective_trace,
        per_group_scores=rep.per_group_scores,
        per_group_init_scores=rep.per_group_init_scores,
        iterations_used=rep.iterations_used,
    )
    finish(report, cfg, rep.wall_time)
    return EXIT_OK


def cmd_dequantize(cfg):
    layer = read_layer(cfg.quantized)
    log_layer(layer)
    w_hat = dequantize(layer)
    if cfg.output:
        save_tensor(w_hat, cfg.output)
    return EXIT_OK


def cmd_evaluate(cfg):
    t0 = time.perf_counter()
    rc = cfg.run_config
    w, xs = load_inputs(cfg, rc)
    layer = read_layer(cfg.quantized)
    if (layer.d_out, layer.d_in) != w.shape:
        raise ShapeError(f"quantized layer is {layer.d_out}x{layer.d_in}, weights are {w.shape[0]}x{w.shape[1]}")
    w_hat = dequantize(layer)
    frob, trace = objective(w, w_hat, np.hstack(xs))

    before = outlier_stats_many([w @ x for x in xs])
    after = outlier_stats_many([w_hat @ x for x in xs])
    logging.info(f"DiagR {before.diagr:.4g} -> {after.diagr:.4g}, Cnt10 {before.cnt10} -> {after.cnt10}")

    report = Report(
        "evaluate", rc.as_dict(), rc.seed,
        bpw=bits_per_weight(layer.k, layer.g, layer.coeff_bits),
        objective_frob=frob,
        objective_trace=trace,
        outlier_stats={"diagr_p95": after.diagr, "cnt10": after.cnt10},
        reference_outlier_stats={"diagr_p95": before.diagr, "cnt10": before.cnt10},
        delta_diagr_pct=relative_change(before.diagr, after.diagr),
        delta_cnt10_pct=relative_change(before.cnt10, after.cnt10),
    )
    finish(report, cfg, time.perf_counter() - t0)
    return EXIT_OK


def compare_layers(cfg, rc):
    if cfg.weights:
        w, xs = load_inputs(cfg, rc)
        yield None, w, np.hstack(xs)
        return
    if cfg.synth:
        seed, d_out, d_in, n = cfg.synth
    else:
        seed = rc.seed
        d_out, d_in = COMPARE_DEFAULT_DIMS
        n = rc.samples_for(d_in)
    for i in range(cfg.layers):
        w, x = synth_layer(seed + i, d_out, d_in, n, rc.tail_index)
        yield seed + i, w, x


def cmd_compare(cfg):
    t0 = time.perf_counter()
    rc = cfg.run_config
    bits = cfg.baseline_bits
    rows = []
    for layer_seed, w, x in compare_layers(cfg, rc):
        rc.validate(w.shape[1])
        hstate = hessian_from_activations(x, rc.percdamp)
        _, rep = bpdq_quantize_layer(w, hstate, rc, x=x)
        _, gptq = gptq_quantize_layer(w, hstate, bits, rc.g, x=x)
        rtn = objective(w, rtn_quantize_layer(w, bits, rc.g), x).frob
        rows.append({
            "seed": layer_seed,
            "bpdq": rep.objective_frob,
            "bpdq_trace": rep.objective_trace,
            "gptq": gptq.objective_frob,
            "rtn": rtn,
        })
        logging.info(f"layer seed {layer_seed}: BPDQ {rep.objective_frob:.6g}, GPTQ {gptq.objective_frob:.6g}, RTN {rtn:.6g}")

    bpdq = np.array([r["bpdq"] for r in rows])
    gptq = np.array([r["gptq"] for r in rows])
    rtn = np.array([r["rtn"] for r in rows])
    report = Report(
        "compare", rc.as_dict(), rc.seed,
        baseline_bits=bits,
        bpw=bits_per_weight(rc.k, rc.g, rc.coeff_bits),
        bpw_fixed=bits_per_weight_fixed(bits, rc.g),
        objective_frob=float(bpdq.mean()),
        objective_trace=float(np.mean([r["bpdq_trace"] for r in rows])),
        baseline_objectives={"rtn": float(rtn.mean()), "gptq": float(gptq.mean())},
        win_rate_vs_gptq=float(np.mean(bpdq < gptq)),
        win_rate_vs_rtn=float(np.mean(bpdq < rtn)),
        layers=rows,
    )
    logging.info(f"BPDQ beats GPTQ on {100 * report.win_rate_vs_gptq:.1f}% of {len(rows)} layers")
    finish(report, cfg, time.perf_counter() - t0, "compare.md.j2")
    return EXIT_OK


def cmd_theory_check(cfg):
    t0 = time.perf_counter()
    rc = cfg.run_config
    names = [cfg.suite] if cfg.suite else None
    results = run_suites(names, seed=rc.seed, prop2_g=cfg.prop2_g, tie="high" if cfg.inject_fault else "low")
    for r in results:
        print(f"{r.name:10s} {'ok' if r.ok else 'FAIL':4s} passed={r.passed} failed={r.failed} skipped={r.skipped}")
    all_passed = all(r.ok for r in results)

    report = Report(
        "theory-check", {**rc.as_dict(), "suite": cfg.suite, "prop2_g": cfg.prop2_g}, rc.seed,
        all_passed=all_passed,
        suites=[
            {"name": r.name, "passed": r.passed, "failed": r.failed, "skipped": r.skipped, "details": r.details}
            for r in results
        ],
    )
    finish(report, cfg, time.perf_counter() - t0, "theory_check.md.j2")
    return EXIT_OK if all_passed else EXIT_SUITE_FAILED


def bench_layer(cfg, rc):
    if cfg.quantized:
        return read_layer(cfg.quantized)
    if cfg.synth:
        seed, d_out, d_in, n = cfg.synth
    else:
        seed = rc.seed
        d_out, d_in = BENCH_DEFAULT_DIMS
        n = rc.samples_for(d_in)
    rc.validate(d_in)
    w, x = synth_layer(seed, d_out, d_in, n, rc.tail_index)
    layer, _ = bpdq_quantize_layer(w, hessian_from_activations(x, rc.percdamp), rc, x=x)
    return layer


def cmd_bench(cfg):
    t0 = time.perf_counter()
    rc = cfg.run_config
    layer = bench_layer(cfg, rc)
    rng = np.random.default_rng(rc.seed)

    lut_ns, dense_ns, deviation = [], [], 0.0
    for _ in range(cfg.reps):
        x = rng.standard_normal(layer.d_in)
        s = time.perf_counter_ns()
        y_lut = lut_matvec(layer, x)
        lut_ns.append(time.perf_counter_ns() - s)
        s = time.perf_counter_ns()
        y_dense = dequantize(layer) @ x
        dense_ns.append(time.perf_counter_ns() - s)
        scale = max(float(np.max(np.abs(y_dense))), 1e-300)
        deviation = max(deviation, float(np.max(np.abs(y_lut - y_dense))) / scale)

    lut_med = float(np.median(lut_ns))
    dense_med = float(np.median(dense_ns))
    report = Report(
        "bench", rc.as_dict(), rc.seed,
        reps=cfg.reps,
        op_counts=lut_op_counts(layer),
        bpw=bits_per_weight(layer.k, layer.g, layer.coeff_bits),
        max_rel_deviation=deviation,
        median_ns_lut=lut_med,
        median_ns_dense=dense_med,
        speedup=dense_med / lut_med if lut_med else 0.0,
    )
    if deviation > 1e-12 and layer.coeff_bits == 64:
        logging.warning(f"LUT path deviates from the dense path by {deviation:.3e}")
    finish(report, cfg, time.perf_counter() - t0)
    return EXIT_OK


COMMANDS = {
    "quantize": cmd_quantize,
    "dequantize": cmd_dequantize,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "theory-check": cmd_theory_check,
    "bench": cmd_bench,
}


def run(cfg):
    try:
        cfg.validate()
        return COMMANDS[cfg.command](cfg)
    except (ConfigError, ShapeError, PreconditionError, OracleSizeError) as e:
        logging.error(f"configuration error: {e}")
        return EXIT_CONFIG
    except (TensorIOError, FormatError) as e:
        logging.error(f"I/O error: {e}")
        return EXIT_IO
    except NumericalError as e:
        logging.error(f"numerical failure: {e}")
        return EXIT_NUMERICAL
    except BpdqError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return EXIT_CONFIG
