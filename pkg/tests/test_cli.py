import csv
import json
import subprocess
import sys

import pytest

from zextavg import acceptance
from zextavg.acceptance import CriterionResult
from zextavg.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_GEOMETRY, main
from zextavg.io import ConfigError, config_hash, load_config, validate_config

SMALL = {"eps": [0.01], "n_orbits": 32, "chunk": 5, "n_paths": 40, "dt": 0.01, "record_every": 25,
         "greenkubo": {"x_grid": [[0.0], [0.5]], "l_max": 5, "k_max": 5, "n_samples": 2000}}


def _config(tmp_path, **over):
    cfg = json.loads(json.dumps(SMALL))
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def _read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


def test_zero_field_gives_zero_error_columns(tmp_path):
    cfg = _config(tmp_path, field={"name": "zero"})
    assert main(["toy-run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    header, rows = _read_csv(tmp_path / "o" / "trajectories_eps0.csv")
    assert header.startswith("# config_hash=") and "seed=" in header
    assert rows and all(float(r["e1"]) == 0.0 for r in rows)
    assert all(float(r["v1"]) == 0.0 and float(r["vtilde1"]) == 0.0 for r in rows)


@pytest.mark.parametrize("command", ["toy-run", "greenkubo", "limit-sim", "convergence"])
def test_reruns_are_byte_identical(tmp_path, command):
    cfg = _config(tmp_path)
    main([command, "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "7"])
    main([command, "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "7", "--threads", "3"])
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_seed_changes_the_numbers_and_the_header(tmp_path):
    cfg = _config(tmp_path)
    main(["toy-run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["toy-run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"])
    a = (tmp_path / "a" / "trajectories_eps0.csv").read_text()
    b = (tmp_path / "b" / "trajectories_eps0.csv").read_text()
    assert a.splitlines()[0].endswith("seed=1") and b.splitlines()[0].endswith("seed=2")
    assert a.splitlines()[2:] != b.splitlines()[2:]


def test_json_format(tmp_path):
    cfg = _config(tmp_path)
    main(["greenkubo", "--config", str(cfg), "--out", str(tmp_path), "--format", "json"])
    doc = json.loads((tmp_path / "a_table.json").read_text())
    assert doc["columns"] == ["x1", "a11", "se11"] and len(doc["rows"]) == 2
    assert doc["provenance"]["config_hash"] == config_hash(load_config(cfg))


def test_billiard_run(tmp_path):
    cfg = _config(tmp_path, system={"type": "billiard"}, field={"name": "billiard"}, n_orbits=6)
    assert main(["billiard-run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["runs"][0]["max_gap"] >= 0


def test_schema_violation_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"eps": "small"}))
    assert main(["toy-run", "--config", str(bad)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_unreadable_config_exits_2(tmp_path):
    assert main(["toy-run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    (tmp_path / "x.json").write_text("{not json")
    assert main(["toy-run", "--config", str(tmp_path / "x.json")]) == EXIT_CONFIG


def test_convergence_with_too_few_samples_exits_2(tmp_path):
    cfg = _config(tmp_path, n_orbits=12)
    assert main(["convergence", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_field_system_mismatch_exits_2(tmp_path):
    cfg = _config(tmp_path, field={"name": "billiard"})
    assert main(["toy-run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_open_horizon_exits_3_with_report(tmp_path):
    geom = {"disks": [{"center": [0.0, 0.0], "radius": 0.2}]}
    cfg = _config(tmp_path, system={"type": "billiard", "geometry": geom}, field={"name": "billiard"})
    assert main(["billiard-run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_GEOMETRY
    rep = json.loads((tmp_path / "o" / "geometry_report.json").read_text())
    assert rep["ok"] is False and rep["horizon"]["unblocked"]


def test_overlapping_disks_exit_3(tmp_path):
    geom = {"disks": [{"center": [0.0, 0.0], "radius": 0.6}]}
    cfg = _config(tmp_path, system={"type": "billiard", "geometry": geom}, field={"name": "billiard"})
    assert main(["billiard-run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_GEOMETRY


def test_acceptance_failure_exits_4(tmp_path, monkeypatch):
    failing = lambda master, sizes: CriterionResult(1, "stub", False, "forced failure")
    monkeypatch.setitem(acceptance.CRITERIA, 1, failing)
    monkeypatch.setattr(acceptance, "_DONE", {})
    cfg = _config(tmp_path, criteria=[1])
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_ACCEPTANCE
    rep = json.loads((tmp_path / "o" / "verify_report.json").read_text())
    assert rep["all_passed"] is False


def test_custom_field_components(tmp_path):
    field = {"g": "cos", "h": "phi_plus_half_shift", "psi": {"0": 1, "1": -1}, "fbar": "neg_sin"}
    cfg = _config(tmp_path, field=field)
    assert main(["greenkubo", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_uncentred_custom_field_is_a_config_error():
    with pytest.raises(ConfigError):
        from zextavg.io import build_field
        build_field(validate_config({"field": {"g": "one", "h": "cos_theta", "psi": {"0": 1},
                                               "fbar": "zero"}}))


def test_module_entry_point(tmp_path):
    cfg = _config(tmp_path, field={"name": "zero"})
    r = subprocess.run([sys.executable, "-m", "zextavg", "toy-run", "--config", str(cfg),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
