import csv
import json
import math
import subprocess
import sys

import pytest

from gendyne import cli


def run(argv, capsys=None):
    code = cli.main(argv)
    out = capsys.readouterr().out if capsys else None
    return code, out


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_trajectory_csv_is_reproducible(tmp_path):
    argv = ["trajectory", "--upsilon", "0.5", "--n-bath", "1", "--t-final", "0.05",
            "--dim", "15", "--seed", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(argv + ["--out", str(a)]) == 0
    assert cli.main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_csv(a)
    assert list(rows[0]) == list(cli.TRAJECTORY_COLUMNS)
    assert len(rows) == 51
    manifest = json.loads((tmp_path / "a.manifest.json").read_text())
    assert manifest["config"]["seed"] == 3
    assert manifest["library"] == "gendyne"


def test_homodyne_trajectory_leaves_theta2_empty(tmp_path):
    out = tmp_path / "h.csv"
    assert cli.main(["trajectory", "--upsilon", "1", "--n-bath", "1", "--t-final", "0.02",
                     "--dim", "15", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert all(r["theta2"] == "" for r in rows)
    assert rows[0]["theta1"] != ""


def test_trajectory_both_engines(tmp_path):
    out = tmp_path / "run.csv"
    assert cli.main(["trajectory", "--engine", "both", "--upsilon", "0.3", "--n-bath", "0.5",
                     "--t-final", "0.05", "--dim", "20", "--out", str(out)]) == 0
    f = read_csv(tmp_path / "run.fock.csv")
    g = read_csv(tmp_path / "run.gaussian.csv")
    assert [r["dw1"] for r in f] == [r["dw1"] for r in g]
    diff = json.loads((tmp_path / "run.diff.json").read_text())
    assert diff


def test_trajectory_both_needs_out():
    assert cli.main(["trajectory", "--engine", "both", "--t-final", "0.01", "--dim", "15"]) == 1


def test_trajectory_json_to_stdout(capsys):
    code, out = run(["trajectory", "--t-final", "0.01", "--dim", "15", "--format", "json"],
                    capsys)
    assert code == 0
    data = json.loads(out)
    assert sorted(data) == sorted(cli.TRAJECTORY_COLUMNS)
    assert data["dw1"][-1] is None


def test_ensemble(tmp_path):
    out = tmp_path / "ens.csv"
    assert cli.main(["ensemble", "--upsilon", "0.5", "--n-bath", "1", "--t-final", "0.1",
                     "--n-traj", "8", "--dim", "15", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == list(cli.ENSEMBLE_COLUMNS)
    last = rows[-1]
    assert float(last["n_lindblad"]) == pytest.approx(1 + (0.2 - 1) * math.exp(-0.1))


@pytest.mark.parametrize("u", ["0", "0.5"])
def test_povm_audit_passes(u, capsys):
    code, out = run(["povm-audit", "--upsilon", u, "--n-bath", "1"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["pass"]
    assert all(a["pass"] for a in report["audits"].values())


def test_povm_audit_homodyne_branch(capsys):
    code, out = run(["povm-audit", "--upsilon", "1", "--n-bath", "1"], capsys)
    assert code == 0
    assert json.loads(out)["pass"]


def test_scheme_check(capsys):
    code, out = run(["scheme-check", "--upsilon", "0.5", "--theta", "1+0.5j"], capsys)
    assert code == 0
    assert json.loads(out)["pass"]
    assert cli.main(["scheme-check", "--upsilon", "1"]) == 1


def test_scheme_sample(tmp_path):
    out = tmp_path / "s.json"
    assert cli.main(["scheme-sample", "--upsilon", "0.5", "--n-bath", "1", "--n-samples",
                     "20000", "--seed", "2", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["pass"]


def test_steady_scan_vacuum(capsys):
    code, out = run(["steady-scan", "--upsilon", "0", "0.5", "--n-bath", "0", "--engine",
                     "both", "--dt", "0.01", "--t-final", "4", "--n-traj", "5", "--dim", "12",
                     "--n0", "0"], capsys)
    assert code == 0
    assert json.loads(out)["pass"]


@pytest.mark.parametrize("argv", [
    ["trajectory", "--upsilon", "1.5"],
    ["trajectory", "--dt", "0.5"],
    ["trajectory", "--t-final", "-1"],
    ["trajectory", "--engine", "nope"],
    ["ensemble", "--n-bath", "-1"],
    ["no-such-command"],
])
def test_config_errors(argv):
    assert cli.main(argv) == 1


def test_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["trajectory", "--t-final", "0.01", "--dim", "15", "--out",
                     str(blocker / "sub" / "x.csv")]) == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gendyne.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "gendyne" in res.stdout
