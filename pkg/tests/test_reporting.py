# SPDX-License-Identifier: Apache-2.0

import json
import warnings

import numpy as np
import pytest

from bpdq.errors import NumericalError
from bpdq.jsondump import SCHEMA_VERSION, Report, encode, gen_jsondump, plain
from bpdq.summary import gen_summary
from runparams import RunParams


def sample_report():
    return Report(
        "theory-check", {"suite": None, "g": None}, 0,
        all_passed=True,
        suites=[{"name": "wls", "passed": 3, "failed": 0, "skipped": 0, "details": {"max_normal_residual": np.float64(1e-12)}}],
    )


class TestJson:
    def test_plain_converts_numpy(self):
        assert plain({"a": np.arange(3), "b": (np.float64(1.5), np.int64(2))}) == {"a": [0, 1, 2], "b": [1.5, 2]}

    def test_schema_fields(self):
        doc = json.loads(encode(sample_report()))
        assert doc["schema_version"] == SCHEMA_VERSION
        assert {"command", "config", "seed", "wall_time_s"} <= set(doc)
        assert doc["suites"][0]["details"]["max_normal_residual"] == 1e-12

    def test_rejects_non_finite(self):
        r = Report("compare", {}, 0, objective_frob=float("nan"))
        with pytest.raises(NumericalError, match="objective_frob"):
            encode(r)

    def test_nested_non_finite(self):
        r = Report("compare", {}, 0, baseline_objectives={"rtn": float("inf"), "gptq": 1.0})
        with pytest.raises(NumericalError):
            r.check_finite()

    def test_encodes_without_deprecation_warnings(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error", DeprecationWarning)
            doc = json.loads(encode(sample_report()))
        assert doc["config"] == {"suite": None, "g": None}

    def test_write(self, tmp_path):
        p = tmp_path / "r.json"
        gen_jsondump(sample_report(), p)
        assert json.loads(p.read_text())["command"] == "theory-check"


class TestSummary:
    def test_renders(self, tmp_path):
        cfg = RunParams(["theory-check"])
        p = tmp_path / "s.md"
        assert gen_summary(sample_report(), p, cfg, "theory_check.md.j2")
        text = p.read_text()
        assert "**PASS**" in text
        assert "| wls | 3 | 0 | 0 |" in text
        assert "max_normal_residual: 1e-12" in text
        assert "Automatically generated by bpdq" in text

    def test_refuses_overwrite(self, tmp_path):
        p = tmp_path / "s.md"
        p.write_text("keep")
        assert not gen_summary(sample_report(), p, RunParams(["theory-check"]), "theory_check.md.j2")
        assert p.read_text() == "keep"

    def test_force_overwrites(self, tmp_path):
        p = tmp_path / "s.md"
        p.write_text("old")
        assert gen_summary(sample_report(), p, RunParams(["theory-check", "-f"]), "theory_check.md.j2")
        assert p.read_text() != "old"
