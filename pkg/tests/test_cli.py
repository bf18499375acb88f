import json
import subprocess
import sys

import pytest

from rauc.cli import EXIT_INVALID, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, build_config, main, parse_grid, _parser
from rauc.instance import dumps


@pytest.fixture
def small_path(small, tmp_path):
    p = tmp_path / "small.json"
    p.write_text(dumps(small))
    return str(p)


def _json_run(capsys, argv):
    code = main(["--json", *argv])
    cap = capsys.readouterr()
    lines = [ln for ln in cap.out.splitlines() if ln.strip()]
    assert len(lines) == 1, cap.out
    return code, json.loads(lines[0]), cap.err


def test_validate_bundled_by_name(capsys):
    assert main(["validate", "kazarlis10.json"]) == EXIT_OK
    assert "0 violations" in capsys.readouterr().out


def test_validate_bad_instance(tmp_path, fleet_doc, capsys):
    doc = json.loads(json.dumps(fleet_doc))
    doc["scenario"]["branch_periods"] = [13, 7]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert main(["validate", str(p)]) == EXIT_INVALID


def test_unparsable_instance_is_validation_failure(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{")
    assert main(["validate", str(p)]) == EXIT_INVALID
    assert "invalid input" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        ["solve-ts", "--no-such-flag"],
        ["solve-ts", "--instance", "/nonexistent/x.json"],
        ["solve-ts", "--rel-gap", "0.5"],
        ["solve-ts", "--backend", "nope"],
        ["sweep", "--eps", "0.1:x:0.1"],
        [],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert capsys.readouterr().err


def test_parse_grid():
    assert parse_grid("0.1:0.5:0.1") == (0.1, 0.2, 0.3, 0.4, 0.5)
    assert parse_grid("0:0.5:0.1") == (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    assert parse_grid("0.1, 0.3") == (0.1, 0.3)


def test_solve_ts_json_and_dumps(small_path, tmp_path, capsys):
    lp, pol, sym = tmp_path / "m.lp", tmp_path / "p.tsv", tmp_path / "s.json"
    code, doc, err = _json_run(capsys, ["solve-ts", "--instance", small_path, "--lambda", "0.2",
                                        "--dump-lp", str(lp), "--dump-policy", str(pol), "--dump-symbols", str(sym)])
    assert code == EXIT_OK
    assert doc["status"] == "optimal" and doc["model"] == "ts"
    assert lp.read_text().startswith("\\ ")
    rows = pol.read_text().splitlines()
    assert len(rows) == 3 * 17 and len(rows[0].split("\t")) == 7
    assert json.loads(sym.read_text())["mode"] == "two_stage"


def test_degenerate_tree_ts_equals_ms(small_path, capsys):
    _, ts, _ = _json_run(capsys, ["solve-ts", "--instance", small_path, "--epsilon", "0", "--lambda", "0"])
    _, ms, _ = _json_run(capsys, ["solve-ms", "--instance", small_path, "--epsilon", "0", "--lambda", "0"])
    assert ts["objective"] == pytest.approx(ms["objective"], rel=1e-6)


def test_rolling_horizon_command(small_path, capsys):
    code, doc, _ = _json_run(capsys, ["rolling-horizon", "--instance", small_path, "--lambda", "0.3"])
    assert code == EXIT_OK
    assert doc["solves"] == 7
    assert doc["gap_abs"] >= -1e-6 * abs(doc["z_ms"]) * 5


def test_infeasible_instance_is_solver_failure(small, tmp_path, capsys):
    p = tmp_path / "hot.json"
    p.write_text(dumps(small.with_demand([2000.0] * small.horizon_T)))
    assert main(["solve-ms", "--instance", str(p)]) == EXIT_SOLVER


def test_bounds_fleet(capsys):
    code, doc, _ = _json_run(capsys, ["bounds", "--epsilon", "0.2", "--lambda", "0", "--delta", "100"])
    assert code == EXIT_OK
    assert doc["D_max"] == pytest.approx(31450)
    assert doc["rho_D"] == pytest.approx(27100)
    assert doc["certified"] is False


def test_bounds_enforced_on_fleet_names_assumption(capsys):
    assert main(["bounds", "--enforce"]) == EXIT_INVALID
    assert "Assumption 3" in capsys.readouterr().err


def test_sweep_outputs(small_path, tmp_path, capsys):
    out = tmp_path / "out"
    code, doc, err = _json_run(capsys, ["sweep", "--instance", small_path, "--eps", "0.1,0.2", "--lambda", "0:0.2:0.2",
                                        "--out", str(out), "--cache", str(tmp_path / "cache")])
    assert code == EXIT_OK
    assert doc["cells"] == 4
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 5
    assert len(list((out / "cells").glob("*.json"))) == 4
    assert (out / "time_ms_s.csv").exists()
    assert json.loads((out / "summary.json").read_text())["cells"] == 4
    assert "cell eps=0.1 lambda=0" in err


def test_sweep_grid_size():
    args = _parser().parse_args(["sweep", "--eps", "0.1:0.5:0.1", "--lambda", "0:0.5:0.1"])
    cfg = build_config(args)
    assert len(cfg.eps_grid) * len(cfg.lambda_grid) == 30


def test_config_precedence(tmp_path, monkeypatch):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"solver": {"backend": "highs", "rel_gap": 1e-4, "time_limit_s": 9},
                                "lambda": 0.25, "workers": 2}))
    monkeypatch.delenv("RAUC_SOLVER", raising=False)
    cfg = build_config(_parser().parse_args(["--config", str(conf), "solve-ms"]))
    assert (cfg.rel_gap, cfg.time_limit_s, cfg.lam, cfg.workers, cfg.backend) == (1e-4, 9, 0.25, 2, "highs")
    monkeypatch.setenv("RAUC_SOLVER", "bnb")
    cfg = build_config(_parser().parse_args(["--config", str(conf), "solve-ms"]))
    assert cfg.backend == "bnb"
    cfg = build_config(_parser().parse_args(["--config", str(conf), "solve-ms", "--backend", "highs", "--rel-gap", "1e-3"]))
    assert (cfg.backend, cfg.rel_gap) == ("highs", 1e-3)


def test_bad_config_file(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text("[1, 2]")
    assert main(["--config", str(conf), "validate"]) == EXIT_USAGE
    assert main(["--config", str(tmp_path / "missing.json"), "validate"]) == EXIT_USAGE


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "rauc", "validate"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "0 violations" in res.stdout
