import csv
import json
import subprocess
import sys

import pytest

from cbfnav import barriers
from cbfnav.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, main


def test_preset_run1_writes_artifacts(tmp_path, capsys):
    assert main(["preset", "run1", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "telemetry sha256" in out and "success=True" in out
    assert (tmp_path / "telemetry.csv").exists()
    assert json.loads((tmp_path / "metrics.json").read_text())["success"] is True
    assert (tmp_path / "plots" / "vcbf_cone.csv").exists()


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CBFNAV_OUT", str(tmp_path / "env"))
    cfg = tmp_path / "short.json"
    cfg.write_text(json.dumps({"max_duration": 1.0}))
    main(["run", "--config", str(cfg)])
    assert (tmp_path / "env" / "telemetry.csv").exists()


def test_timeout_is_scenario_fault(tmp_path):
    cfg = tmp_path / "short.json"
    cfg.write_text(json.dumps({"max_duration": 1.0}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_malformed_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"vehicle": {"mass": 0}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "vehicle.mass" in capsys.readouterr().err


def test_unknown_preset(capsys):
    assert main(["preset", "run9"]) == EXIT_CONFIG


def test_sweep_bad_field_fails_before_running(tmp_path, capsys):
    assert main(["sweep", "--param", "wind.speed", "--values", "1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert not (tmp_path / "sweep").exists()


def test_verify_passes(capsys):
    assert main(["verify"]) == EXIT_OK
    assert "8/8 checks passed" in capsys.readouterr().out


def test_verify_catches_broken_gradient(monkeypatch, capsys):
    good = barriers.grad_h_v
    monkeypatch.setattr(barriers, "grad_h_v", lambda p, params: 1.01 * good(p, params))
    assert main(["verify"]) == EXIT_VERIFY
    assert "FAIL  barrier gradients" in capsys.readouterr().out


def test_sweep_preserves_metrics(tmp_path, capsys):
    rc = main(["sweep", "--param", "max_duration", "--values", "0.5", "1.0", "--out", str(tmp_path)])
    assert rc == 1  # both points time out
    rows = json.loads((tmp_path / "sweep" / "sweep.json").read_text())
    assert [r["value"] for r in rows] == [0.5, 1.0]
    for i, r in enumerate(rows):
        per_run = json.loads((tmp_path / "sweep" / f"run{i:03d}" / "metrics.json").read_text())
        assert {k: r[k] for k in per_run} == per_run
    with (tmp_path / "sweep" / "sweep.csv").open() as fh:
        table = list(csv.DictReader(fh))
    assert [t["success"] for t in table] == ["False", "False"]


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "cbfnav", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "sweep" in out.stdout


@pytest.mark.parametrize("argv", [[], ["preset"], ["sweep", "--param", "x"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
