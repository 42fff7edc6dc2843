# main script called on the command-line

# SPDX-License-Identifier: Apache-2.0

import logging
import sys

from bpdq.commands import run
from runparams import RunParams


def main(argv=None):
    logging.basicConfig(format="%(levelname)s: %(message)s")
    cfg = RunParams(argv)
    logging.getLogger().setLevel(cfg.log_level)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
