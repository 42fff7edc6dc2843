# saving run summaries as markdown

# SPDX-License-Identifier: Apache-2.0

import logging
from pathlib import Path

from jinja2 import Environment, PackageLoader, select_autoescape

from .errors import TensorIOError


def gen_summary(report, path, cfg, template):
    p = Path(path)
    if p.exists():
        if not cfg.opt_force:
            logging.error(f"Destination for summary {path} already exists, will not overwrite")
            return False
        logging.warning(f"Overwriting summary {path}")

    jinja = Environment(
        loader=PackageLoader("bpdq", package_path="templates"),
        autoescape=select_autoescape(),
        trim_blocks=True, lstrip_blocks=True
    )
    jinja.globals = cfg.all_as_dict
    jinja.filters["num"] = lambda x: f"{x:.6g}"
    jinja.filters["pct"] = lambda x: f"{100 * x:.1f}%"

    page = jinja.get_template(template).render(vars(report))
    try:
        p.write_text(page)
    except OSError as e:
        raise TensorIOError(p, f"cannot write summary ({e.strerror or e})") from e
    return True
