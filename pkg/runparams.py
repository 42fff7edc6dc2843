# the parameters of a run

# SPDX-License-Identifier: Apache-2.0

import argparse
from datetime import datetime, timezone
import logging
import sys

from bpdq import __version__
from bpdq.errors import ConfigError
from bpdq.grid import MEMBERSHIP_MAX_G
from bpdq.tensorio import RunConfig
from bpdq.theory import SUITES

COMMANDS = ("quantize", "dequantize", "evaluate", "compare", "theory-check", "bench")
PROP2_MIN_G = 3
PROP2_MAX_G = MEMBERSHIP_MAX_G


def synth_spec(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected SEED,DOUT,DIN,N, got '{text}'")
    try:
        seed, d_out, d_in, n = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer field in '{text}'")
    return seed, d_out, d_in, n


class RunParams:
    def __init__(self, args=None):
        self._ts = datetime.now(timezone.utc)
        self.process_args(sys.argv[1:] if args is None else args)

    @property
    def autogen_header(self):
        return f"Automatically generated by bpdq v{self.parser_version} on {self._ts.isoformat()}"

    @property
    def command(self):
        return self.args.command

    @property
    def weights(self):
        return self.args.weights

    @property
    def calib(self):
        return self.args.calib or []

    @property
    def synth(self):
        return self.args.synth

    @property
    def quantized(self):
        return self.args.quantized

    @property
    def output(self):
        return self.args.output

    @property
    def report(self):
        return self.args.report

    @property
    def summary(self):
        return self.args.summary

    @property
    def suite(self):
        return self.args.suite

    @property
    def prop2_g(self):
        return self.args.g if self.command == "theory-check" else None

    @property
    def layers(self):
        return self.args.layers

    @property
    def reps(self):
        return self.args.reps

    @property
    def baseline_bits(self):
        return self.args.bits if self.args.bits is not None else self.run_config.k

    @property
    def inject_fault(self):
        return self.args.inject_fault

    @property
    def opt_debug(self):
        return self.args.debug

    @property
    def opt_force(self):
        return self.args.force

    @property
    def opt_quiet(self):
        return self.args.quiet

    @property
    def opt_verbose(self):
        return self.args.verbose

    @property
    def parser_version(self):
        return __version__

    @property
    def log_level(self):
        if self.opt_debug:
            return logging.DEBUG
        if self.opt_verbose:
            return logging.INFO
        if self.opt_quiet:
            return logging.ERROR
        return logging.WARNING

    @property
    def run_config(self):
        a = self.args
        tail = a.tail_index
        if tail is None:
            tail = 1.0 if self.command == "compare" else 0.0
        return RunConfig(
            k=a.k if a.k is not None else 2,
            g=a.g if a.g is not None else 64,
            iters=a.iters,
            alpha=a.alpha,
            percdamp=a.percdamp,
            seed=a.seed,
            coeff_bits=a.coeff_bits,
            tail_index=tail,
            n_samples=self.synth[3] if self.synth else None,
            rtn_init=a.rtn_init,
        )

    @property
    def all_as_dict(self):
        return { k: getattr(self, k) for k in (
            "autogen_header",
            "command",
            "opt_debug",
            "opt_force",
            "opt_quiet",
            "opt_verbose",
            "parser_version",
            ) }

    def process_args(self, args):
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("-d", "--debug", action="store_true", help="Print debug output")
        common.add_argument("-f", "--force", action="store_true", help="Overwrite existing summary files")
        common.add_argument("-q", "--quiet", action="store_true", help="Print no output")
        common.add_argument("-v", "--verbose", action="store_true", help="Print verbose output")
        common.add_argument("--weights", metavar="PATH", help="Weight matrix W (TNSR, d_out x d_in)")
        common.add_argument("--calib", metavar="PATH", action="append", help="Calibration activations X (TNSR, d_in x N); repeatable for evaluate")
        common.add_argument("--synth", metavar="SEED,DOUT,DIN,N", type=synth_spec, help="Use a seeded synthetic layer instead of files")
        common.add_argument("--quantized", metavar="PATH", help="Quantized layer (BPQZ)")
        common.add_argument("-k", "--k", type=int, help="Number of bit-planes (1..8)")
        common.add_argument("-g", "--g", type=int, help="Group size; for theory-check, the counterexample suite group size")
        common.add_argument("--iters", type=int, default=10, help="Refinement iterations per group")
        common.add_argument("--alpha", type=float, default=1e-4, help="Coefficient-fit damping")
        common.add_argument("--percdamp", type=float, default=0.01, help="Relative Hessian damping")
        common.add_argument("--coeff-bits", type=int, choices=(16, 32, 64), default=16, help="Stored coefficient width")
        common.add_argument("--bits", type=int, help="Fixed-grid baseline width (defaults to k)")
        common.add_argument("--rtn-init", action="store_true", help="Also try the k-bit RTN planes when initializing each row")
        common.add_argument("--tail-index", type=float, help="Heaviness of synthetic activation outliers")
        common.add_argument("--seed", type=int, default=0, help="Seed for synthetic data and suites")
        common.add_argument("-o", "--output", metavar="PATH", help="Output file")
        common.add_argument("--report", metavar="PATH", help="Write the JSON report here")
        common.add_argument("--summary", metavar="PATH", help="Write a markdown summary here")
        common.add_argument("--suite", choices=sorted(SUITES), help="Run a single theory-check suite")
        common.add_argument("--layers", type=int, default=50, help="Number of seeded layers to compare")
        common.add_argument("--reps", type=int, default=100, help="Benchmark repetitions")
        common.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

        parser = argparse.ArgumentParser(prog="bpdq", description="Bit-plane decomposition quantization of linear layers")
        parser.add_argument("-V", "--version", action="version", version=f"%(prog)s {__version__}")
        sub = parser.add_subparsers(dest="command", required=True, metavar="command")
        sub.add_parser("quantize", parents=[common], help="Quantize a layer to a BPQZ file")
        sub.add_parser("dequantize", parents=[common], help="Expand a BPQZ file to a dense TNSR matrix")
        sub.add_parser("evaluate", parents=[common], help="Objective and outlier statistics of a quantized layer")
        sub.add_parser("compare", parents=[common], help="BPDQ against GPTQ and RTN on seeded layers")
        sub.add_parser("theory-check", parents=[common], help="Run the feasible-set and consistency suites")
        sub.add_parser("bench", parents=[common], help="LUT matvec against dense dequantize-then-matvec")
        self.args = parser.parse_args(args)

        if self.command == "quantize":
            if self.args.k is None:
                parser.error("quantize requires -k")
            if self.args.g is None:
                parser.error("quantize requires -g")
        if self.command in ("quantize", "evaluate") and not self.synth:
            if not (self.weights and self.calib):
                parser.error(f"{self.command} needs --weights and --calib, or --synth")
        if self.command in ("dequantize", "evaluate") and not self.quantized:
            parser.error(f"{self.command} requires --quantized")
        if self.command in ("quantize", "dequantize") and not self.output:
            logging.warning(f"No output file given for {self.command}, nothing will be written")

    def validate(self):
        if self.reps < 1:
            raise ConfigError(f"--reps={self.reps} must be positive")
        if self.layers < 1:
            raise ConfigError(f"--layers={self.layers} must be positive")
        if self.prop2_g is not None and not PROP2_MIN_G <= self.prop2_g <= PROP2_MAX_G:
            raise ConfigError(f"theory-check --g={self.prop2_g} outside {PROP2_MIN_G}..{PROP2_MAX_G}")
        if self.command != "theory-check":
            self.run_config.validate()
        return self
