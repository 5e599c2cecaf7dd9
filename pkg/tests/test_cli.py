import csv
import json

import numpy as np
import pytest

from _fixtures import cycle4, edge2, single_vertex
from graphyamabe import PSchedule, save_graph
from graphyamabe.cli import main
from graphyamabe.continuation import TRACE_COLUMNS


@pytest.fixture
def files(tmp_path):
    def write(name, fixture):
        G, d = fixture
        path = tmp_path / f"{name}.json"
        save_graph(path, G, d.g, d.h)
        return str(path)

    return {
        "one": write("one", single_vertex(g=1.0, h=1.0, alpha=3.0)),
        "four": write("four", single_vertex(g=4.0, h=1.0, alpha=3.0)),
        "c4": write("c4", cycle4(alpha=2.0)),
        "e2": write("e2", edge2()),
        "p5": write("p5", _path5()),
        "dir": tmp_path,
    }


def _path5():
    from _fixtures import build

    return build("abcde", [(a, b, 1.0) for a, b in zip("abcd", "bcde")])


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# -- solve ------------------------------------------------------------------------

def test_solve_single_vertex(files, capsys):
    out = files["dir"] / "sol.json"
    code, text, _ = _run(capsys, "solve", "--graph", files["one"], "--alpha", 3, "--p", 2, "--out", out)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["u"] == {"a": 1.0} and doc["lambda"] == 1.0
    assert "lambda=1" in text and "max-u bound" in text and "lambda bound" in text


def test_solve_to_stdout_keeps_json_clean(files, capsys):
    code, text, err = _run(capsys, "solve", "--graph", files["c4"], "--alpha", 2, "--p", 1.5)
    assert code == 0
    assert set(json.loads(text)) >= {"p", "lambda", "u"}
    assert "lambda=" in err


def test_solve_malformed_json(files, capsys):
    bad = files["dir"] / "bad.json"
    bad.write_text('{"vertices": [\n  {"id": "a", "mu": 1,, }]}')
    code, _, err = _run(capsys, "solve", "--graph", bad, "--alpha", 3, "--p", 2)
    assert code == 2
    assert "line 2" in err


def test_solve_bad_field(files, capsys):
    bad = files["dir"] / "bad.json"
    bad.write_text(json.dumps({"vertices": [{"id": "a", "mu": 1, "g": 0, "h": 1}], "edges": []}))
    code, _, err = _run(capsys, "solve", "--graph", bad, "--alpha", 3, "--p", 2)
    assert code == 2
    assert "vertices[0]" in err and ".g" in err


def test_solve_p_equal_alpha(files, capsys):
    code, _, err = _run(capsys, "solve", "--graph", files["one"], "--alpha", 3, "--p", 3)
    assert code == 2
    assert "p < alpha" in err


def test_solve_non_convergence_dumps_best(files, capsys):
    out = files["dir"] / "best.json"
    code, _, err = _run(capsys, "solve", "--graph", files["e2"], "--alpha", 3, "--p", 1.2,
                        "--grad-tol", 1e-16, "--max-iters", 1, "--out", out)
    assert code == 1
    assert "no convergence" in err
    assert set(json.loads(out.read_text())["u"]) == {"a", "b"}


def test_missing_required_flag(files, capsys):
    code, _, _ = _run(capsys, "solve", "--graph", files["one"], "--p", 2)
    assert code == 2


# -- limit -----------------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="at p_min = 1 + 1e-4 the clamped identity residual is 2.8e-4, above the default tol 1e-6")
def test_limit_single_vertex_default_tol(files, capsys):
    code, _, _ = _run(capsys, "limit", "--graph", files["four"], "--alpha", 3, "--out", files["dir"] / "c.json")
    assert code == 0


def test_limit_single_vertex(files, capsys):
    cert = files["dir"] / "c.json"
    trace = files["dir"] / "t.csv"
    code, text, _ = _run(capsys, "limit", "--graph", files["four"], "--alpha", 3, "--tol", 1e-3,
                         "--out", cert, "--trace", trace)
    assert code == 0
    assert json.loads(cert.read_text())["u"]["a"] == pytest.approx(2.0, abs=1e-3)
    assert "PASSES" in text and "identity residual" in text


def test_limit_constant_cycle(files, capsys):
    cert = files["dir"] / "c.json"
    code, _, _ = _run(capsys, "limit", "--graph", files["c4"], "--alpha", 2, "--out", cert)
    assert code == 0
    doc = json.loads(cert.read_text())
    assert all(v == pytest.approx(1.0, abs=1e-12) for v in doc["u"].values())
    assert max(abs(v) for v in doc["inclusion_residual"].values()) <= 1e-6


def test_limit_absurd_tolerance_still_writes(files, capsys):
    cert = files["dir"] / "c.json"
    code, _, _ = _run(capsys, "limit", "--graph", files["four"], "--alpha", 3, "--tol", 1e-300,
                      "--out", cert, "--quiet")
    assert code == 1
    assert cert.exists()


def test_limit_failure_writes_partial_trace(files, capsys):
    trace = files["dir"] / "t.csv"
    code, _, err = _run(capsys, "limit", "--graph", files["e2"], "--alpha", 3, "--grad-tol", 1e-16,
                        "--max-iters", 1, "--trace", trace, "--out", files["dir"] / "c.json")
    assert code == 1
    assert "continuation failed" in err
    with open(trace, newline="") as fh:
        assert tuple(csv.DictReader(fh).fieldnames) == TRACE_COLUMNS


def test_trace_has_one_row_per_p(files, capsys):
    trace = files["dir"] / "t.csv"
    code, _, _ = _run(capsys, "limit", "--graph", files["e2"], "--alpha", 3, "--p-min", 1.001, "--ratio", 0.25,
                      "--trace", trace, "--out", files["dir"] / "c.json", "--quiet")
    assert code == 0
    with open(trace, newline="") as fh:
        rows = list(csv.DictReader(fh))
    sched = PSchedule.geometric(3.0, None, 0.25, 1.001)
    assert [float(r["p"]) for r in rows] == list(sched.p_values)
    assert tuple(rows[0]) == TRACE_COLUMNS


def test_limit_is_deterministic(files, capsys):
    outs = []
    for k in range(2):
        cert, trace = files["dir"] / f"c{k}.json", files["dir"] / f"t{k}.csv"
        _run(capsys, "limit", "--graph", files["e2"], "--alpha", 3, "--out", cert, "--trace", trace, "--quiet")
        outs.append((cert.read_bytes(), trace.read_bytes()))
    assert outs[0] == outs[1]


def test_roundtrip_limit_then_verify(files, capsys):
    for tol in ("1e-3", "1e-9"):
        cert = files["dir"] / "c.json"
        code_limit, _, _ = _run(capsys, "limit", "--graph", files["four"], "--alpha", 3, "--tol", tol,
                                "--out", cert, "--quiet")
        code_verify, _, _ = _run(capsys, "verify", "--graph", files["four"], "--alpha", 3, "--tol", tol,
                                 "--candidate", cert, "--quiet")
        assert code_limit == code_verify


# -- verify ------------------------------------------------------------------------------

def _candidate(files, doc):
    path = files["dir"] / "cand.json"
    path.write_text(json.dumps(doc))
    return path


def test_verify_trivial(files, capsys):
    code, text, _ = _run(capsys, "verify", "--graph", files["four"], "--alpha", 3,
                         "--candidate", _candidate(files, {"a": 0}))
    assert code == 0
    assert "trivial" in text


def test_verify_closed_form(files, capsys):
    code, _, _ = _run(capsys, "verify", "--graph", files["four"], "--alpha", 3,
                      "--candidate", _candidate(files, {"a": 2}))
    assert code == 0
    code, text, _ = _run(capsys, "verify", "--graph", files["four"], "--alpha", 3,
                         "--candidate", _candidate(files, {"a": 1.9}))
    assert code == 1
    assert "3.900e-01" in text


def test_verify_missing_vertex(files, capsys):
    code, _, err = _run(capsys, "verify", "--graph", files["e2"], "--alpha", 2,
                        "--candidate", _candidate(files, {"a": 1}))
    assert code == 2
    assert "missing" in err


def test_verify_rejects_non_object(files, capsys):
    code, _, _ = _run(capsys, "verify", "--graph", files["e2"], "--alpha", 2,
                      "--candidate", _candidate(files, [1, 2]))
    assert code == 2


# -- oracle ------------------------------------------------------------------------------

def test_oracle_single_vertex(files, capsys):
    code, text, _ = _run(capsys, "oracle", "--graph", files["four"], "--alpha", 3)
    assert code == 0
    values = {c["a"] for c in json.loads(text)}
    assert {0.0, 2.0} <= values


def test_oracle_size_guard(files, capsys):
    code, _, err = _run(capsys, "oracle", "--graph", files["p5"], "--alpha", 2)
    assert code == 2
    assert "4 vertices" in err


def test_oracle_two_vertex_contains_limit(files, capsys):
    out = files["dir"] / "o.json"
    cert = files["dir"] / "c.json"
    assert _run(capsys, "oracle", "--graph", files["e2"], "--alpha", 2, "--out", out, "--quiet")[0] == 0
    assert _run(capsys, "limit", "--graph", files["e2"], "--alpha", 2, "--out", cert, "--quiet")[0] == 0
    u = np.array([json.loads(cert.read_text())["u"][k] for k in "ab"])
    cands = np.array([[c["a"], c["b"]] for c in json.loads(out.read_text())])
    assert len(cands) > 0
    assert np.min(np.max(np.abs(cands - u), axis=1)) <= 0.05
