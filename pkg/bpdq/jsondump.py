# saving run reports as JSON

# SPDX-License-Identifier: Apache-2.0

import logging
import math
from pathlib import Path

import jsonpickle

from .errors import NumericalError, TensorIOError

SCHEMA_VERSION = 1


class Report:
    def __init__(self, command, config, seed, **fields):
        self.schema_version = SCHEMA_VERSION
        self.command = command
        self.config = config
        self.seed = seed
        for k, v in fields.items():
            setattr(self, k, plain(v))
        self.wall_time_s = 0.0

    def check_finite(self):
        bad = [k for k, v in vars(self).items() if not _finite(v)]
        if bad:
            raise NumericalError(f"report fields are not finite: {', '.join(bad)}")
        return self


def plain(v):
    # numpy scalars and arrays to JSON-ready python values
    if hasattr(v, "tolist"):
        return v.tolist()
    if isinstance(v, dict):
        return {k: plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [plain(x) for x in v]
    return v


def _finite(v):
    if isinstance(v, float):
        return math.isfinite(v)
    if isinstance(v, dict):
        return all(_finite(x) for x in v.values())
    if isinstance(v, list):
        return all(_finite(x) for x in v)
    return True


def encode(report):
    return jsonpickle.encode(report.check_finite(), unpicklable=False, keys=True, indent=2, warn=True)


def gen_jsondump(report, path):
    p = Path(path)
    try:
        p.write_text(encode(report) + "\n")
    except OSError as e:
        raise TensorIOError(p, f"cannot write report ({e.strerror or e})") from e
    logging.info(f"report written to {p}")
