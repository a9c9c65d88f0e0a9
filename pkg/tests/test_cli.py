"""End-to-end command behaviour: CSV emission and reproducibility, exit
codes, the condition table, transform dumps, and the seed sweep."""

import csv
import json
import subprocess
import sys

import pytest

from ilcset.cli import main

CSV_HEADER = "l,E_inf,U_inf,res_err_rec,res_in_rec"


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def make_divergent_config(tmp_path, iterations):
    doc = {
        "system": {
            "n": 1, "m": 1, "p": 1, "N": 1,
            "A": [["0"]], "B": [["0"]], "C": [["0"]], "D": [["1"]],
            "w": ["0"], "v": ["0"], "r": ["1"], "x0": [0.0],
        },
        "gains": {"Xi": [["-3"]]},
        "run": {"mode": "direct-xi", "iterations": iterations},
    }
    path = tmp_path / "divergent.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_run_writes_metrics_csv(tmp_path, capsys):
    out = tmp_path / "metrics.csv"
    code = main(["run", "--preset", "example1", "--iterations", "4",
                 "--out", str(out)])
    assert code == 0
    raw = out.read_bytes()
    assert raw.startswith(CSV_HEADER.encode() + b"\r\n")
    rows = read_rows(out)
    assert len(rows) == 5  # header + one row per iteration
    assert rows[1][0] == "0" and rows[1][3] == "" and rows[1][4] == ""
    assert float(rows[2][3]) < 1e-8  # residual present from the second row on
    summary = capsys.readouterr().out
    assert "mode: direct-xi" in summary
    assert "converged value:" in summary


def test_identical_invocations_identical_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["run", "--preset", "example2", "--iterations", "5", "--seed", "9"]
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_changes_the_rows(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--preset", "example1", "--iterations", "3",
                 "--seed", "1", "--out", str(a)]) == 0
    assert main(["run", "--preset", "example1", "--iterations", "3",
                 "--seed", "2", "--out", str(b)]) == 0
    assert a.read_bytes() != b.read_bytes()


def test_run_without_out_streams_csv(capsys):
    code = main(["run", "--preset", "example1", "--iterations", "2"])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out.startswith(CSV_HEADER)
    assert "mode: direct-xi" in captured.err  # summary kept off the data stream


def test_trajectory_file_final(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["run", "--preset", "example1", "--iterations", "3",
                 "--out", str(out), "--record-trajectories", "final"]) == 0
    rows = read_rows(tmp_path / "m_traj.csv")
    assert rows[0] == ["l", "k", "y1", "y2", "r1", "r2", "e1", "e2"]
    assert len(rows) == 1 + 101
    assert all(row[0] == "2" for row in rows[1:])
    assert [row[1] for row in rows[1:]] == [str(k) for k in range(101)]


def test_trajectory_file_all(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["run", "--preset", "example1", "--iterations", "3",
                 "--out", str(out), "--record-trajectories", "all"]) == 0
    rows = read_rows(tmp_path / "m_traj.csv")
    assert len(rows) == 1 + 3 * 101


def test_trajectories_need_out_path(capsys):
    code = main(["run", "--preset", "example1", "--iterations", "2",
                 "--record-trajectories", "final"])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_verify_set_reports_gap(tmp_path, capsys):
    out = tmp_path / "m.csv"
    code = main(["run", "--preset", "example1", "--iterations", "4",
                 "--out", str(out), "--verify-set"])
    assert code == 0
    summary = capsys.readouterr().out
    line = next(l for l in summary.splitlines()
                if l.startswith("set-equivalence max output gap:"))
    assert float(line.rsplit(" ", 1)[1]) <= 1e-9


def test_check_table_and_requirements(capsys):
    assert main(["check", "--preset", "example1"]) == 0
    table = capsys.readouterr().out
    assert "rho_dxi" in table and "rho_xid" in table and "lmi" in table
    assert "pass" in table and "fail" in table

    assert main(["check", "--preset", "example1", "--require", "rho_dxi"]) == 0
    assert main(["check", "--preset", "example1", "--require", "rho_xid"]) == 1
    assert main(["check", "--preset", "example1", "--require-all"]) == 1
    capsys.readouterr()
    assert main(["check", "--preset", "example1", "--require", "bogus"]) == 2


def test_check_look_ahead_family(capsys):
    assert main(["check", "--preset", "example2", "--require", "rho_cbgamma"]) == 0
    table = capsys.readouterr().out
    assert "rho_cbgamma" in table and "rho_gammacb" in table
    assert "lmi" not in table
    assert main(["check", "--preset", "example2", "--require-all"]) == 1


def test_transform_dump(tmp_path):
    out = tmp_path / "t.json"
    assert main(["transform", "--preset", "example1", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["kind"] == "xi"
    assert doc["steps"] == 101 and len(doc["blocks"]) == 101
    block = doc["blocks"][0]
    assert block["col_perm"] == [0, 1, 2]
    assert len(block["matrix"]) == 3 and len(block["inverse"]) == 3
    assert len(doc["transformed"]["Bstar"]) == 101
    assert doc["transformed"]["Dstar"] is not None


def test_transform_dump_look_ahead(capsys):
    assert main(["transform", "--preset", "example2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kind"] == "gamma"
    assert doc["steps"] == 100
    assert doc["transformed"]["Dstar"] is None
    assert len(doc["transformed"]["vstar"]) == 101


def test_config_file_with_overrides(tmp_path, capsys):
    path = make_divergent_config(tmp_path, 30)
    code = main(["run", "--config", path, "--iterations", "3"])
    captured = capsys.readouterr()
    assert code == 0
    assert len(captured.out.strip().splitlines()) == 4  # header + 3 rows
    assert "warning" in captured.err  # contraction violated but finite


def test_mode_override(tmp_path, capsys):
    out = tmp_path / "m.csv"
    code = main(["run", "--preset", "example1", "--iterations", "3",
                 "--mode", "transformed-xi", "--out", str(out)])
    assert code == 0
    assert "mode: transformed-xi" in capsys.readouterr().out


def test_divergent_run_exits_one(tmp_path, capsys):
    path = make_divergent_config(tmp_path, 600)
    code = main(["run", "--config", path, "--out", str(tmp_path / "m.csv")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_bad_config_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    capsys.readouterr()


def test_preset_and_config_mutually_exclusive(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--preset", "example1", "--config", "x.json"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_sweep_merges_in_seed_order(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["run", "--preset", "example1", "--iterations", "3",
                 "--sweep", "seeds=3..5", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["seed"] + CSV_HEADER.split(",")
    assert [row[0] for row in rows[1:]] == ["3"] * 3 + ["4"] * 3 + ["5"] * 3
    again = tmp_path / "sweep2.csv"
    assert main(["run", "--preset", "example1", "--iterations", "3",
                 "--sweep", "seeds=3..5", "--out", str(again)]) == 0
    assert out.read_bytes() == again.read_bytes()


def test_sweep_bad_spec_exits_two(capsys):
    assert main(["run", "--preset", "example1", "--sweep", "3..5"]) == 2
    capsys.readouterr()


def test_version_runs_as_module():
    proc = subprocess.run([sys.executable, "-m", "ilcset.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "0.1.0"
