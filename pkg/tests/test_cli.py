import json

from cranmm.cli import main

CFG = {"K": 2, "L": 2, "N_C": 16, "solver": {"max_iters": 5}}


def _cfg(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(CFG))
    return str(path)


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["run", "--config", _cfg(tmp_path), "--sweep", "pu", "--values", "0,10",
               "--schemes", "zf", "--trials", "2", "--seed", "3", "--out", str(out)])
    assert rc == 0
    lines = (out / "sweep.csv").read_text().strip().split("\n")
    assert len(lines) == 3 and lines[1].startswith("ZF,P_UE_dbm,0.0,")
    assert json.loads((out / "sweep.json").read_text())["seed"] == 3
    assert "wrote" in capsys.readouterr().out


def test_invalid_cell_exit_code(tmp_path):
    rc = main(["run", "--config", _cfg(tmp_path), "--sweep", "nc", "--values", "1",
               "--schemes", "zf", "--trials", "1", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"K": 0}))
    rc = main(["run", "--config", str(bad), "--sweep", "pu", "--values", "0",
               "--out", str(tmp_path / "o")])
    assert rc == 1 and "error" in capsys.readouterr().err


def test_unsorted_values_rejected(tmp_path):
    rc = main(["run", "--sweep", "pu", "--values", "10,0", "--trials", "1",
               "--out", str(tmp_path / "o")])
    assert rc == 1


def test_converge(tmp_path):
    out = tmp_path / "c"
    assert main(["converge", "--config", _cfg(tmp_path), "--scheme", "mr", "--out", str(out)]) == 0
    rows = (out / "convergence.csv").read_text().strip().split("\n")
    result = json.loads((out / "solve_result.json").read_text())
    assert len(rows) - 1 == result["trace"]["iterations"] + 1


def test_oracle_checks(capsys):
    assert main(["oracle", "--check", "scalar", "--instances", "2"]) == 0
    assert main(["oracle", "--check", "grid", "--instances", "1", "--density", "120"]) == 0
    assert capsys.readouterr().out.count("PASS") == 2
