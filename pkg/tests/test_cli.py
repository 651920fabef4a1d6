from __future__ import annotations

import json
import subprocess
import sys

from cdnemu.cli import main


def scenario(tmp_path, **extra):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"server_count": 2,
                             "recorder": {"num_pings": 5, "cpu_iterations": 3}, **extra}))
    return p


def test_run_and_analyze(tmp_path, capsys):
    assert main(["run", "--scenario", str(scenario(tmp_path)), "--out",
                 str(tmp_path / "run")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["run_id"] == "s-seed7"
    rtt, cpu = out["ping_csv"], out["cpu_csv"]
    assert main(["analyze", "--inputs", f"a={rtt},{cpu}", f"b={rtt}", "--out",
                 str(tmp_path / "rep")]) == 0
    assert "RTT trend over server count: flat" in capsys.readouterr().out
    assert (tmp_path / "rep" / "cpu_boxplot.svg").exists()


def test_exit_code_invalid(tmp_path, capsys):
    assert main(["run", "--scenario", str(scenario(tmp_path, server_count=0)), "--out",
                 str(tmp_path)]) == 2
    assert main(["run", "--scenario", "testbed-99", "--out", str(tmp_path)]) == 2
    assert main(["suite", "--presets", "testbed-4", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,a\nt,1,2\n")
    assert main(["analyze", "--inputs", f"x={bad}", "--out", str(tmp_path / "r")]) == 2
    assert "row 2" in capsys.readouterr().err


def test_exit_code_runtime(tmp_path):
    assert main(["analyze", "--inputs", f"x={tmp_path / 'missing.csv'}", "--out",
                 str(tmp_path / "r")]) == 3


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cdnemu", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "analyze" in res.stdout
