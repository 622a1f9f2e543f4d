import json
import math
import subprocess
import sys

import pytest

from coupled_escape import cli
from coupled_escape.io import read_table
from coupled_escape.model import ModelParams, barrier, critical_length
from coupled_escape.spectra import prefactor_below


def test_barrier_table(tmp_path):
    out = tmp_path / "b.csv"
    assert cli.main(["barrier", "--l-min", "1", "--l-max", "6", "--n", "6", "-o", str(out)]) == 0
    header, rows = read_table(out)
    assert tuple(header) == cli.COLUMNS["barrier"]
    assert len(rows) == 6
    p = ModelParams(3, 2)
    for L, de, regime in rows:
        assert float(de) == barrier(float(L), p)
        assert regime == ("below" if float(L) < math.pi else "above")
    assert out.read_bytes().count(b"\r\n") == 7


def test_instanton_profile(tmp_path):
    out = tmp_path / "i.csv"
    assert cli.main(["instanton", "--mu1", "4", "--L", "3", "--points", "33", "-o", str(out)]) == 0
    header, rows = read_table(out)
    assert tuple(header) == ("z", "phi1", "phi2")
    z = [float(r[0]) for r in rows]
    assert len(z) == 33 and z[0] == -1.5 and z[-1] == 1.5
    assert float(rows[16][1]) == pytest.approx(0.0, abs=1e-15)


def test_instanton_from_m(tmp_path):
    out = tmp_path / "i.csv"
    assert cli.main(["instanton", "--m", "0.5", "--points", "64", "-o", str(out)]) == 0
    assert len(read_table(out)[1]) == 64


def test_prefactor_skips_critical_length(tmp_path):
    out = tmp_path / "g.csv"
    lc = critical_length(ModelParams(4, 2))
    argv = ["prefactor", "--mu1", "4", "--l-min", str(lc - 1), "--l-max", str(lc + 1),
            "--n", "3", "-o", str(out)]
    assert cli.main(argv) == 0
    header, rows = read_table(out)
    assert tuple(header) == cli.COLUMNS["prefactor"]
    assert [r[3] for r in rows] == ["below", "above"]
    assert float(rows[0][1]) == pytest.approx(prefactor_below(lc - 1, ModelParams(4, 2)), rel=1e-6)
    assert float(rows[0][2]) == -2.0 and float(rows[1][2]) < 0


def test_sweep_json(tmp_path):
    out = tmp_path / "s.json"
    argv = ["sweep", "--l-min", "2", "--l-max", "5", "--n", "4", "--format", "json", "-o", str(out)]
    assert cli.main(argv) == 0
    data = json.loads(out.read_text())
    assert data["columns"] == list(cli.COLUMNS["sweep"])
    assert len(data["rows"]) == 4
    assert all(r[2] > 0 for r in data["rows"])


def test_reruns_are_byte_identical(tmp_path):
    for argv in (["sweep", "--l-min", "2", "--l-max", "5", "--n", "4"],
                 ["simulate", "--epsilon", "1.25", "--runs", "6", "--seed", "3"]):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert cli.main([*argv, "-o", str(a)]) == 0
        assert cli.main([*argv, "-o", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


def test_simulate_manifest(tmp_path):
    out = tmp_path / "sim.csv"
    assert cli.main(["simulate", "--epsilon", "1.25", "--runs", "5", "--seed", "2",
                     "--n-sites", "16", "-o", str(out)]) == 0
    header, rows = read_table(out)
    assert tuple(header) == cli.COLUMNS["simulate"]
    assert [r[0] for r in rows] == ["0", "1", "2", "3", "4"]
    assert {r[2] for r in rows} <= {"true", "false"}
    man = json.loads((tmp_path / "sim.manifest.json").read_text())
    assert man["n_runs"] == 5
    assert man["lattice"]["seed"] == 2 and man["lattice"]["n_sites"] == 16
    assert (man["params"]["mu1"], man["params"]["mu2"]) == (3.0, 2.0)
    assert man["version"].startswith("0.1.0")
    assert man["wall_time"] >= 0


def test_simulate_jobs_do_not_change_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["simulate", "--epsilon", "1.25", "--runs", "6", "--seed", "5"]
    assert cli.main([*base, "--jobs", "1", "-o", str(a)]) == 0
    assert cli.main([*base, "--jobs", "2", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_fit_writes_json(tmp_path):
    out = tmp_path / "fit.json"
    assert cli.main(["fit", "--mu1", "4", "--side", "below", "-o", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert rec["side"] == "below" and rec["n_points"] == 12
    assert rec["slope"] == pytest.approx(-0.5, abs=0.01)
    assert (rec["window_lo"], rec["window_hi"]) == (1e-4, 1e-2)


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    assert cli.main(["barrier", "--l-min", "1", "--l-max", "2", "--n", "2", "-o", "rel.csv"]) == 0
    assert (tmp_path / "rel.csv").exists()
    monkeypatch.chdir(tmp_path)
    assert cli.main(["barrier", "--l-min", "1", "--l-max", "2", "--n", "2"]) == 0
    assert (tmp_path / "barrier.csv").exists()


@pytest.mark.parametrize("argv", [
    ["barrier", "--mu1", "1", "--mu2", "2", "--l-min", "1", "--l-max", "2"],
    ["barrier", "--l-min", "3", "--l-max", "2"],
    ["barrier", "--l-min", "1", "--l-max", "2", "--n", "1"],
    ["simulate", "--epsilon", "-1"],
    ["instanton"],
    ["instanton", "--L", "4", "--m", "0.5"],
    ["prefactor", "--l-min", "1", "--l-max", "2", "--jobs", "0"],
])
def test_usage_errors_exit_2(tmp_path, argv):
    assert cli.main([*argv, "-o", str(tmp_path / "x.csv")]) == 2
    assert not (tmp_path / "x.csv").exists()


def test_argparse_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["barrier", "--l-max", "2"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 2


def test_numerical_failure_exits_1(tmp_path, capsys):
    out = tmp_path / "x.csv"
    # no nonuniform saddle exists below the critical length
    assert cli.main(["instanton", "--L", "2", "-o", str(out)]) == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err.lower()


def test_module_entry_point(tmp_path):
    out = tmp_path / "b.csv"
    res = subprocess.run([sys.executable, "-m", "coupled_escape", "barrier", "--l-min", "1",
                          "--l-max", "2", "--n", "2", "-o", str(out)], capture_output=True)
    assert res.returncode == 0
    assert out.exists()
    res = subprocess.run([sys.executable, "-m", "coupled_escape", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout
