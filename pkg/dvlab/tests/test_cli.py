#!/usr/bin/env python3
"""
Tests for the dvlab command line (run in-process)
"""

import io
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import pytest

from cli import canonical_json, run
from helpers import g11_g12


def _run(argv, stdin_text=None):
    out = io.StringIO()
    stdin = io.StringIO(stdin_text) if stdin_text is not None else io.StringIO("")
    code = run(argv, stdin=stdin, stdout=out)
    text = out.getvalue()
    assert text.endswith("\n") and text.count("\n") == 1
    return code, text


def _gmn(m, n, p=2, N=4):
    code, text = _run(["gmn", "--m", str(m), "--n", str(n), "--p", str(p), "--N", str(N)])
    assert code == 0
    return text


def test_gmn_pipes_into_newton():
    code, text = _run(["newton"], _gmn(1, 1))
    assert code == 0
    assert text == '{"polygon":[{"mult":2,"slope":"1/2"}]}\n'


def test_inline_input():
    module = json.dumps(json.loads(_gmn(1, 2))["module"])
    code, text = _run(["newton", "--input", module])
    assert code == 0
    assert json.loads(text) == {"polygon": [{"slope": "1/3", "mult": 3}]}


def test_input_file(tmp_path):
    path = tmp_path / "g21.json"
    path.write_text(_gmn(2, 1, 3, 4))
    code, text = _run(["newton", "--input", str(path)])
    assert code == 0
    assert json.loads(text)["polygon"] == [{"slope": "2/3", "mult": 3}]


def test_ring():
    code, text = _run(["ring", "--p", "3", "--a", "2", "--N", "4"])
    assert code == 0
    data = json.loads(text)
    assert data["residue_size"] == 9
    assert data["ring"]["N"] == 4


def test_csd_check():
    code, text = _run(["csd-check", "--s", "2", "--r", "1"], _gmn(1, 1))
    assert code == 0
    data = json.loads(text)
    assert data["csd"] is True
    assert data["slope_data"] == {"s": 2, "r": [1]}
    code, text = _run(["csd-check", "--s", "1", "--r", "1"], _gmn(1, 1))
    assert code == 0
    assert json.loads(text)["csd"] is False


def test_mathematical_failures_exit_with_one():
    code, text = _run(["newton"], _gmn(1, 1, N=1))
    assert code == 1
    assert json.loads(text)["error"] == "InsufficientPrecision"
    code, text = _run(["gmn", "--m", "2", "--n", "2", "--p", "2"])
    assert code == 1
    assert json.loads(text)["error"] == "InvalidParams"
    code, text = _run(["ring", "--p", "4", "--N", "2"])
    assert code == 1
    assert json.loads(text)["error"] == "NotPrime"


@pytest.mark.parametrize("argv,stdin_text,error", [
    ([], None, "UsageError"),
    (["frobnicate"], None, "UsageError"),
    (["gmn", "--m", "1"], None, "UsageError"),
    (["newton"], "{not json", "ParseError"),
    (["newton"], "[1, 2]", "ParseError"),
    (["newton"], '{"ring": {}}', "ParseError"),
    (["csd-check", "--r", "1"], None, "UsageError"),
])
def test_usage_errors_exit_with_two(argv, stdin_text, error):
    if stdin_text is None and argv[:1] == ["csd-check"]:
        stdin_text = _gmn(1, 1)
    code, text = _run(argv, stdin_text)
    assert code == 2
    assert json.loads(text)["error"] == error


def test_enumerate_needs_a_degree():
    code, text = _run(["enumerate", "--s", "2", "--r", "1"], _gmn(1, 1))
    assert code == 2


def test_enumerate_is_deterministic_under_parallelism():
    module = _gmn(1, 1, 3, 4)
    code1, serial = _run(["enumerate", "--s", "2", "--r", "1", "--log-d", "1"], module)
    code2, threaded = _run(["enumerate", "--s", "2", "--r", "1", "--log-d", "1", "--parallel", "3"], module)
    assert code1 == code2 == 0
    assert serial == threaded
    data = json.loads(serial)
    assert data["phi_stable_candidates"] == 4
    assert data["count"] == 1


def test_filtration_and_saturate():
    module = canonical_json(g11_g12(2, 10).to_dict())
    code, text = _run(["filtration"], module)
    assert code == 0
    data = json.loads(text)
    assert data["slopes"] == ["1/2", "1/3"]
    assert data["graded_polygons"] == [[{"slope": "1/2", "mult": 2}], [{"slope": "1/3", "mult": 3}]]
    code, text = _run(["saturate"], module)
    assert code == 0
    assert json.loads(text)["log_degree"] == 0
    code, text = _run(["split"], module)
    assert code == 0
    assert json.loads(text)["slopes"] == [[{"slope": "1/2", "mult": 2}], [{"slope": "1/3", "mult": 3}]]


def test_saturate_output_feeds_newton():
    code, text = _run(["saturate", "--s", "2", "--r", "1"], _gmn(1, 1))
    assert code == 0
    code, text = _run(["newton"], text)
    assert code == 0
    assert json.loads(text)["polygon"] == [{"slope": "1/2", "mult": 2}]


def test_descend():
    code, text = _run(["descend", "--s", "2", "--r", "1"], _gmn(1, 1, 2, 5))
    assert code == 0
    data = json.loads(text)
    assert data["field_degree"] == 1
    assert data["model"]["rank"] == 2


def test_example41():
    code, text = _run(["example41", "--p", "2", "--N", "4", "--t", "0"])
    assert code == 0
    data = json.loads(text)
    assert data["xi_kernel_order"] == 1
    assert data["polygon"] == [{"slope": "1/3", "mult": 3}, {"slope": "1/2", "mult": 2}]
    code, text = _run(["example41", "--p", "2", "--N", "4"])
    assert code == 0
    assert json.loads(text)["jump"] == 1


def test_example41_fiber_pipes_into_newton_and_saturate():
    code, fiber = _run(["example41", "--p", "2", "--N", "8", "--t", "1"])
    assert code == 0
    code, text = _run(["newton"], fiber)
    assert code == 0
    assert json.loads(text)["polygon"] == [{"slope": "1/3", "mult": 3}, {"slope": "1/2", "mult": 2}]
    code, text = _run(["saturate"], fiber)
    assert code == 0
    assert json.loads(text)["log_degree"] == 1
    code, text = _run(["csd-check"], text)
    assert code == 0
    assert json.loads(text)["csd"] is True


def test_example41_phi_etale_heights():
    code, text = _run(["example41", "--p", "2", "--N", "6", "--phi-etale"])
    assert code == 0
    data = json.loads(text)
    assert data["constant_height"] is True
    assert [f["height"] for f in data["fibers"]] == [3, 3]
    code, text = _run(["example41", "--p", "2", "--N", "6", "--t", "0", "--phi-etale"])
    assert code == 0
    assert json.loads(text)["integral"] is True


def test_example42_and_verification():
    code, text = _run(["example42", "--p", "2", "--N", "4"])
    assert code == 0
    assert json.loads(text)["factor_ranks"] == [3, 3]
    code, text = _run(["verify42", "--p", "2", "--N", "6", "--log-d-max", "1"])
    assert code == 0
    data = json.loads(text)
    assert data["uniform_mismatch"] == 1
    assert data["conclusion"] == {"no_glued_csd_isogeny_up_to": 1}


def test_help_exits_cleanly():
    assert run(["--help"], stdout=io.StringIO()) == 0


def test_canonical_json():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'
