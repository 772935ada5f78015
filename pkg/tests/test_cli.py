import json

import pytest

from dbarforge.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, main


def _gen(tmp_path, name, *extra):
    out = tmp_path / name
    assert main(["generate", "--out", str(out), *extra]) == EXIT_OK
    return out


def test_generate_trivial_and_solve(tmp_path, capsys):
    prob = _gen(tmp_path, "triv.dbarproblem.json", "--m", "0", "--n", "1", "--p", "2", "--difficulty", "0")
    rc = main(["solve", str(prob), "--npa", "17"])
    assert rc == EXIT_OK
    sol = json.loads((tmp_path / "triv.dbarsolution.json").read_text())
    assert sol["report"]["iterations"] == 0 and sol["report"]["certified"]
    csv_text = (tmp_path / "triv.trace.csv").read_text()
    assert csv_text.startswith(f"# manifest {sol['manifest_hash']}")


def test_generate_is_deterministic(tmp_path):
    args = ["--m", "1", "--n", "1", "--p", "2,1", "--difficulty", "0.2", "--seed", "7"]
    a = _gen(tmp_path, "a.dbarproblem.json", *args)
    b = _gen(tmp_path, "b.dbarproblem.json", *args)
    ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
    ja["manifest"]["outputs"] = jb["manifest"]["outputs"] = []
    ja.pop("manifest_hash"), jb.pop("manifest_hash")
    ja["manifest"].pop("hash"), jb["manifest"].pop("hash")
    assert ja == jb
    c = _gen(tmp_path, "a.dbarproblem.json", *args)
    assert c.read_bytes() == a.read_bytes()


def test_invalid_chain_exit_2(tmp_path):
    out = tmp_path / "bad.json"
    assert main(["generate", "--m", "1", "--p", "1,3", "--out", str(out)]) == EXIT_INPUT
    assert not out.exists()


def test_corrupted_json_exit_2(tmp_path):
    bad = tmp_path / "x.dbarproblem.json"
    bad.write_text("{not json")
    assert main(["solve", str(bad)]) == EXIT_INPUT
    bad.write_text(json.dumps({"format": "dbarproblem", "calibration": {"m": "?"}}))
    assert main(["solve", str(bad)]) == EXIT_INPUT


def test_unknown_suite_exit_2():
    assert main(["verify", "nonsense"]) == EXIT_INPUT


def test_unknown_flag_exit_2():
    assert main(["solve"]) == EXIT_INPUT


def test_verify_algebra_quick(tmp_path):
    out = tmp_path / "rep.json"
    assert main(["verify", "algebra", "--quick", "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["passed"] and all(c["passed"] for c in rep["checks"])


def test_real_problem_round_trip(tmp_path):
    prob = _gen(tmp_path, "exy.dbarproblem.json", "--field", "real", "--gauge", "exy")
    assert main(["solve", str(prob)]) == EXIT_OK
    sol = tmp_path / "exy.dbarsolution.json"
    assert json.loads(sol.read_text())["report"]["residual"] <= 1e-6
    assert main(["report", str(sol), "--out", str(tmp_path / "r.json")]) == EXIT_OK


def test_config_file_and_threads(tmp_path, monkeypatch):
    monkeypatch.setenv("DBARFORGE_THREADS", "1")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"solver": {"npa": 17, "K_max": 1}}))
    prob = _gen(tmp_path, "p.dbarproblem.json", "--difficulty", "0")
    assert main(["solve", str(prob), "--config", str(cfg)]) == EXIT_OK
    cfg.write_text(json.dumps({"bogus": {}}))
    assert main(["solve", str(prob), "--config", str(cfg)]) == EXIT_INPUT


def test_uncertified_run_exit_1(tmp_path):
    prob = _gen(tmp_path, "m.dbarproblem.json", "--difficulty", "0.2", "--float", "--dmax", "16")
    assert main(["solve", str(prob), "--npa", "17", "--K-max", "1"]) == EXIT_FAIL
