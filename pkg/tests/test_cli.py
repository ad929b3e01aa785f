from __future__ import annotations

import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from semiflat import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _digest(folder: Path) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.iterdir()) if p.suffix in (".csv", ".obj")}


def test_toda_solve_happy_path(tmp_path, capsys):
    code, out, _ = _run(capsys, "toda", "solve", "--config", str(CONFIGS / "tzitzeica_torus.json"), "--out", str(tmp_path))
    assert code == 0
    report = json.loads(out)
    assert report["ok"] and report["converged"]
    assert (tmp_path / "solution.csv").exists()
    assert json.loads((tmp_path / "solve_report.json").read_text())["ok"]


def test_unknown_key_is_a_config_error(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "tzitzeica_torus.json").read_text())
    cfg["grid"]["bogus"] = 1
    code, _, err = _run(capsys, "toda", "solve", "--config", _write(tmp_path, "c.json", cfg), "--out", str(tmp_path))
    assert code == 1
    diag = json.loads(err.strip().splitlines()[-1])
    assert diag["status"] == "config_error" and diag["key"] == "grid.bogus"


def test_wrong_type_names_the_key(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "tzitzeica_torus.json").read_text())
    cfg["grid"]["nx"] = "many"
    code, _, err = _run(capsys, "toda", "solve", "--config", _write(tmp_path, "c.json", cfg))
    assert code == 1 and json.loads(err.strip().splitlines()[-1])["key"] == "grid.nx"


def test_unreadable_and_malformed_configs(tmp_path, capsys):
    code, _, err = _run(capsys, "toda", "solve", "--config", str(tmp_path / "missing.json"))
    assert code == 1 and "cannot read" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    code, _, err = _run(capsys, "toda", "solve", "--config", str(bad))
    assert code == 1 and "invalid JSON" in err


def test_nonconvergence_exits_2_and_still_writes(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "tzitzeica_torus.json").read_text())
    cfg["max_iters"] = 1
    cfg["tol"] = 1e-14
    code, out, _ = _run(capsys, "toda", "solve", "--config", _write(tmp_path, "c.json", cfg), "--out", str(tmp_path / "o"))
    assert code == 2
    assert not json.loads(out)["ok"]
    assert (tmp_path / "o" / "solution.csv").exists()
    assert (tmp_path / "o" / "solve_report.json").exists()


def test_pipeline_reports_every_stage(tmp_path, capsys):
    code, out, _ = _run(capsys, "pipeline", "d23-to-g2", "--config", str(CONFIGS / "d23.json"), "--out", str(tmp_path))
    assert code == 0
    summary = json.loads(out)
    assert [s["stage"] for s in summary["stages"]] == ["solve", "flatness", "develop", "cone", "g2"]
    for name in ("solve", "flatness", "develop", "cone", "g2"):
        assert json.loads((tmp_path / f"{name}_report.json").read_text())["ok"]
    for name in ("solution.csv", "points.csv", "mesh.obj", "u.csv"):
        assert (tmp_path / name).exists()


def test_pipeline_failure_keeps_earlier_reports(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "d23.json").read_text())
    cfg["g2"]["tol"]["tension"] = 1e-12
    code, out, _ = _run(capsys, "pipeline", "d23-to-g2", "--config", _write(tmp_path, "c.json", cfg), "--out", str(tmp_path / "o"))
    assert code == 2
    stages = json.loads(out)["stages"]
    assert stages[-1] == {"stage": "g2", "ok": False}
    assert all(s["ok"] for s in stages[:-1])
    for name in ("solve", "flatness", "develop", "cone", "g2"):
        assert (tmp_path / "o" / f"{name}_report.json").exists()


def test_pipeline_rejects_non_quadric_family(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "d23.json").read_text())
    cfg["toda"]["family"] = "tzitzeica"
    code, _, err = _run(capsys, "pipeline", "d23-to-g2", "--config", _write(tmp_path, "c.json", cfg))
    assert code == 1 and json.loads(err.strip().splitlines()[-1])["key"] == "toda.family"


def test_repeated_runs_are_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert _run(capsys, "pipeline", "d23-to-g2", "--config", str(CONFIGS / "d23.json"), "--out", str(tmp_path / name))[0] == 0
    da, db = _digest(tmp_path / "a"), _digest(tmp_path / "b")
    assert da == db and len(da) == 4


def test_gauge_and_develop_commands(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "d23.json").read_text())
    single = {"toda": cfg["toda"], "gauge": cfg["gauge"]}
    code, out, _ = _run(capsys, "gauge", "verify", "--config", _write(tmp_path, "g.json", single), "--out", str(tmp_path))
    assert code == 0 and (tmp_path / "connection.json").exists()
    single = {"toda": cfg["toda"], "develop": cfg["develop"]}
    code, out, _ = _run(capsys, "develop", "--config", _write(tmp_path, "d.json", single), "--out", str(tmp_path))
    assert code == 0 and (tmp_path / "mesh.obj").exists()
    assert json.loads(out)["failed"] == []
    single["develop"] = dict(cfg["develop"], tol={"quadric": 1e-30})
    code, out, _ = _run(capsys, "develop", "--config", _write(tmp_path, "d.json", single), "--out", str(tmp_path))
    assert code == 2 and json.loads(out)["failed"] == ["quadric"]


def test_g2_build_then_verify(tmp_path, capsys):
    code, _, _ = _run(capsys, "g2", "build", "--config", str(CONFIGS / "g2_linear.json"), "--out", str(tmp_path))
    assert code == 0
    code, out, _ = _run(capsys, "g2", "verify", "--u", str(tmp_path / "u.csv"), "--out", str(tmp_path))
    assert code == 0
    res = json.loads(out)["residuals"]
    assert res["tension"] == 0.0 and res["dpsi"] == 0.0 and res["dphi"] == 0.0


def test_nahm_run(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "nahm_su3.json").read_text())
    cfg["x_span"] = 1.0
    code, out, _ = _run(capsys, "nahm", "run", "--config", _write(tmp_path, "n.json", cfg), "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["drift"]["curve"] < 1e-8
    for name in ("trajectory.csv", "curve.csv", "nahm_report.json"):
        assert (tmp_path / name).exists()


def test_nahm_blowup_exits_2(tmp_path, capsys):
    cfg = {"initial": {"kind": "random", "n": 2, "real_form": "higgs", "scale": 1.0}, "seed": 0, "x_span": 20.0, "step": 1e-3}
    code, out, _ = _run(capsys, "nahm", "run", "--config", _write(tmp_path, "n.json", cfg), "--out", str(tmp_path))
    assert code == 2 and "blowup" in json.loads(out)
    assert (tmp_path / "trajectory.csv").exists()


def test_octo_commands(capsys):
    code, out, _ = _run(capsys, "octo", "table")
    assert code == 0 and len(out.strip().splitlines()) >= 8
    code, out, _ = _run(capsys, "octo", "check")
    assert code == 0 and json.loads(out)["stabilizer_dimension"] == 14


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "semiflat", "octo", "check"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["stabilizer_dimension"] == 14


def test_thread_env_var(tmp_path):
    code = "import os, semiflat.cli; print(os.environ.get('OMP_NUM_THREADS'))"
    env = {"SEMIFLAT_THREADS": "3", "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, timeout=120)
    assert proc.stdout.strip() == "3"


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 2
