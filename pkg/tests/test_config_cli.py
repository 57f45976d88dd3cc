import csv
import io
import json

import pytest

from tiltmott import cli, experiments
from tiltmott.config import EXPERIMENTS, parse_config, resolved
from tiltmott.errors import ConfigError, InvariantViolation, PhysicsGuardError


def _run(tmp_path, name, cfg, *extra, out="out"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return cli.main([name, "--config", str(path), "--out", str(tmp_path / out), *extra])


def _summary(tmp_path, out="out"):
    return json.loads((tmp_path / out / "summary.json").read_text())


def test_minimal_bh_scaling_config_gets_defaults():
    cfg = parse_config('{"experiment": "bh-scaling", "model": {"J": 1, "delta": 0.05}}')
    assert cfg.grid == 64 and cfg.tol == 1e-10
    full = resolved(cfg)
    assert full["protocol"]["kind"] == "tunneling"
    assert full["model"]["d"] == 2


def test_subcritical_model_is_a_physics_guard(tmp_path, capsys):
    with pytest.raises(PhysicsGuardError, match="Mott-phase guard"):
        parse_config('{"experiment": "bh-scaling", "model": {"J": 1, "U": 5}}')
    assert _run(tmp_path, "bh-scaling", {"model": {"J": 1, "U": 5}}) == 3
    assert "Mott-phase guard" in capsys.readouterr().err
    assert not (tmp_path / "out" / "summary.json").exists()


def test_unknown_keys_are_listed(tmp_path, capsys):
    with pytest.raises(ConfigError) as exc:
        parse_config('{"experiment": "qed-scan", "colour": 1, "tau": -1}')
    assert "colour" in str(exc.value) and "tau" in str(exc.value)
    assert _run(tmp_path, "qed-scan", {"bogus_key": 1}) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_bad_documents_are_schema_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config("{not json")
    with pytest.raises(ConfigError):
        parse_config('{"experiment": "ed-run"}', experiment="qed-scan")
    (tmp_path / "bad.json").write_bytes(b"\xff\xfe")
    assert cli.main(["qed-scan", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 2


def test_qed_scan_outputs_are_byte_identical(tmp_path):
    assert cli.main(["qed-scan", "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["qed-scan", "--out", str(tmp_path / "b")]) == 0
    for name in ("qed_scan.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.DictReader(io.StringIO((tmp_path / "a" / "qed_scan.csv").read_text())))
    assert {"k_perp_sq", "beta_sq", "unitarity_residual"} <= set(rows[0])
    summary = _summary(tmp_path, "a")
    assert summary["experiment"] == "qed-scan"
    assert summary["config"]["tau"] == 100
    assert all("fitted_slope" in s for s in summary["scans"])


def test_floquet_scan_step_too_coarse(tmp_path, capsys):
    cfg = {"model": {"J": 0.01, "U": 1}, "delta_v": {"start": 0.5, "stop": 1.0, "step": 0.01}}
    assert _run(tmp_path, "floquet-scan", cfg) == 5
    assert "StepTooCoarse" in capsys.readouterr().err


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    def broken(cfg):
        raise InvariantViolation("norm drifted")

    monkeypatch.setitem(experiments.RUNNERS, "ed-run", broken)
    assert _run(tmp_path, "ed-run", {"model": {"J": 0.1, "U": 1, "d": 1}, "sites": 3,
                                     "delta_v": [1.0]}) == 4


def test_failed_write_leaves_no_partial_outputs(tmp_path, monkeypatch):
    import os

    real = os.replace
    calls = []

    def flaky(src, dst):
        calls.append(dst)
        if len(calls) == 2:
            raise OSError("disk full")
        real(src, dst)

    monkeypatch.setattr(cli.os, "replace", flaky)
    with pytest.raises(OSError):
        cli.write_outputs({"a.csv": "x\n", "b.json": "{}", "summary.json": "{}"}, tmp_path / "out")
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == []


def test_tol_and_threads_overrides(tmp_path):
    cfg = parse_config("{}", "qed-scan", {"tol": 1e-9, "threads": 2})
    assert cfg.tol == 1e-9 and cfg.threads == 2
    with pytest.raises(ConfigError):
        parse_config("{}", "qed-scan", {"tol": -1.0})


def test_schema_lists_every_experiment(capsys):
    assert cli.main(["schema"]) == 0
    text = capsys.readouterr().out
    json.loads(text)
    for name in EXPERIMENTS:
        assert name in text


def test_small_runs_of_each_experiment(tmp_path):
    cases = {
        "bh-pair-density": {"model": {"J": 1, "delta": 0.05}, "protocol": {"gradient": 0.15}, "grid": 4},
        "correlations-check": {"model": {"J": 1, "delta": 0.05}, "grid": 2, "n_times": 2,
                               "protocols": [{"gradient": 0.15}],
                               "real_space": {"sites": 8, "chain_times": [10.0]}},
        "ed-run": {"model": {"J": 0.1, "U": 1, "d": 1}, "sites": 4, "delta_v": [0.5, 1.0],
                   "n_samples": 3},
    }
    for name, cfg in cases.items():
        assert _run(tmp_path, name, cfg, out=name) == 0, name
        s = _summary(tmp_path, name)
        assert s["experiment"] == name
    ed = _summary(tmp_path, "ed-run")
    assert ed["basis"]["hermiticity_residual"] == 0


def test_shipped_docs_match_the_code(capsys):
    from pathlib import Path

    docs = Path(__file__).resolve().parents[1] / "docs"
    assert cli.main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads((docs / "config_schema.json").read_text())
    examples = sorted((docs / "examples").glob("*.json"))
    assert {json.loads(p.read_text())["experiment"] for p in examples} == set(EXPERIMENTS)
    for p in examples:
        parse_config(p.read_text())
