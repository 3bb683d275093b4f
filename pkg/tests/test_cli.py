import json
import subprocess
import sys

from rinverse.cli import main

SMALL = {
    "name": "cli_small",
    "descriptors": [{"fixture": "K1", "resolution": 5}],
    "operator": {"direction": [0, 1], "lambda": [0, 0]},
    "functions": ["(const 1)"],
    "jet_order": 1,
    "resolution": {"base": 5, "per_segment": 3},
}


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_run_writes_json(tmp_path, capsys):
    code = main(["run", write(tmp_path, SMALL), "--out", str(tmp_path / "out")])
    assert code == 0
    report = json.loads((tmp_path / "out" / "cli_small.json").read_text())
    assert report["passed"] and report["points"] == 13
    assert "PASS" in capsys.readouterr().out


def test_run_csv_and_overrides(tmp_path):
    code = main(["run", write(tmp_path, SMALL), "--out", str(tmp_path), "--format", "csv",
                 "--jet-order", "2", "--quad-tol", "1e-12"])
    assert code == 0
    assert (tmp_path / "cli_small.csv").read_text().startswith("check,point_index")


def test_config_error_exit_code(tmp_path, capsys):
    doc = dict(SMALL, jet_order=0)
    assert main(["run", write(tmp_path, doc)]) == 2
    assert "jet_order" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path):
    # 1/x1 is singular on the fiber over x1 = 0; the row is recorded as an error
    assert main(["run", write(tmp_path, dict(SMALL, functions=["(div (const 1) (var 1))"]))]) == 1


def test_verify_and_fixtures(tmp_path, capsys):
    assert main(["verify", write(tmp_path, SMALL), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "cli_small.identities.json").exists()
    assert main(["verify", "neg_invalid_surface"]) == 1
    assert main(["fixtures", "list"]) == 0
    out = capsys.readouterr().out
    assert "K1_e1" in out and "k1_e2_lambda0" in out


def test_console_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rinverse.cli", "fixtures", "list"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "graph" in proc.stdout
