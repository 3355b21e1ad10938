from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import numpy as np
import pytest

from subspace_bounds.cli import main
from subspace_bounds.errors import AssumptionViolatedError, ConfigError, InvalidInputError
from subspace_bounds.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    TrialRecord,
    build_problem,
    coverage_report,
    load_config,
    problem_bound,
    records_to_csv,
    run_experiment,
    write_reports,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = {
    "schema_version": 1,
    "scenario": 2,
    "n": 40,
    "K": 3,
    "delta": 0.05,
    "trials": 40,
    "seed": 7,
    "H": {"kind": "orthogonal", "scale": 1.0, "seed": 3},
    "noise": {"gamma2": {"e1_ratio": 2}, "S": {"kind": "ar1", "rho": 0.4}},
}


def small(**changes):
    doc = copy.deepcopy(SMALL)
    doc.update(changes)
    return doc


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc))
    return path


def record(i, err, bound, event=True):
    return TrialRecord(i, (0, i), err, bound, event, True, err <= bound, event)


# --- config validation -------------------------------------------------------------------


@pytest.mark.parametrize(
    "changes",
    [
        {"scenario": 5},
        {"K": 0},
        {"K": 50},
        {"trials": 0},
        {"seed": -1},
        {"delta": 1.5},
        {"detail": "rough"},
        {"n": 4.5},
        {"schema_version": 2},
    ],
)
def test_invalid_configs_rejected(changes):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(small(**changes))


def test_missing_noise_block_rejected():
    doc = small()
    del doc["noise"]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_pls_needs_block():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(small(scenario="pls"))


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_overrides():
    cfg = ExperimentConfig.from_dict(small()).with_overrides(seed=99, trials=3)
    assert (cfg.seed, cfg.trials) == (99, 3)
    assert cfg.raw["seed"] == 99


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    build_problem(cfg)


def test_e1_ratio_calibration():
    problem = build_problem(ExperimentConfig.from_dict(small()))
    report = problem_bound(problem)
    # margin = rho_min/4 - d psi with d psi = rho_min / 8
    rho_min = problem.basis.gram_summary.rho_min
    assert report.assumption_margin == pytest.approx(rho_min / 8, rel=1e-10)


# --- experiments ------------------------------------------------------------------------


def test_noiseless_single_trial():
    cfg = load_config(CONFIGS / "noiseless.json")
    summary, records = run_experiment(cfg)
    assert len(records) == 1
    assert records[0].empirical_error == 0.0
    assert summary.coverage == 1.0
    assert summary.mean_bound == 0.0


def test_plain_run_with_violated_assumption_raises():
    with pytest.raises(AssumptionViolatedError):
        run_experiment(load_config(CONFIGS / "e1_violated.json"))


def test_determinism_of_records():
    cfg = ExperimentConfig.from_dict(small())
    _, a = run_experiment(cfg)
    _, b = run_experiment(cfg)
    assert records_to_csv(a) == records_to_csv(b)


def test_seed_changes_records():
    cfg = ExperimentConfig.from_dict(small())
    _, a = run_experiment(cfg)
    _, b = run_experiment(cfg.with_overrides(seed=8))
    assert records_to_csv(a) != records_to_csv(b)


@pytest.mark.parametrize("name", ["small", "pls"])
def test_parallel_equivalence(name):
    cfg = ExperimentConfig.from_dict(small()) if name == "small" else load_config(CONFIGS / "pls.json").with_overrides(trials=60)
    _, serial = run_experiment(cfg, threads=1)
    _, parallel = run_experiment(cfg, threads=4)
    assert serial == parallel


def test_thread_env_variable(monkeypatch):
    cfg = ExperimentConfig.from_dict(small())
    _, serial = run_experiment(cfg, threads=1)
    monkeypatch.setenv("SUBSPACE_BOUNDS_THREADS", "3")
    _, env = run_experiment(cfg)
    assert serial == env
    monkeypatch.setenv("SUBSPACE_BOUNDS_THREADS", "zero")
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_records_consistent():
    summary, records = run_experiment(ExperimentConfig.from_dict(small()))
    for r in records:
        assert r.within_bound == (r.empirical_error <= r.bound_value)
        assert r.seed_stream == (7, r.trial_index)
    assert [r.trial_index for r in records] == list(range(40))
    assert 0 <= summary.coverage <= 1


def test_regularized_run_uses_ridge_error():
    doc = small(regularized=True, noise_inflation=4.0)
    summary, records = run_experiment(ExperimentConfig.from_dict(doc))
    assert summary.bound["regularized"]
    assert summary.bound["alpha"] > 0
    assert not summary.assumption_held


# --- coverage report -------------------------------------------------------------------


def test_coverage_all_within():
    s = coverage_report([record(i, 0.1, 1.0) for i in range(10)])
    assert s.coverage == 1.0 and s.coverage_se == 0.0


def test_coverage_half_within():
    recs = [record(i, 0.1 if i % 2 else 2.0, 1.0) for i in range(20)]
    s = coverage_report(recs)
    assert s.coverage == 0.5
    assert s.coverage_se == pytest.approx(math.sqrt(0.25 / 20))


def test_coverage_recount_oracle(rng):
    recs = [record(i, float(rng.exponential()), float(rng.exponential()), bool(rng.random() < 0.9)) for i in range(257)]
    within = events = 0
    total_err = 0.0
    worst = -math.inf
    for r in recs:
        within += r.empirical_error <= r.bound_value
        events += r.event_held
        total_err += r.empirical_error
        worst = max(worst, r.empirical_error)
    s = coverage_report(recs)
    assert s.coverage == within / 257
    assert s.event_frequency == events / 257
    assert s.mean_error == pytest.approx(total_err / 257, rel=1e-12)
    assert s.max_error == worst


def test_coverage_empty_rejected():
    with pytest.raises(InvalidInputError):
        coverage_report([])


def test_vacuous_fraction():
    recs = [record(0, 0.01, 0.5), record(1, 0.01, 0.05)]
    assert coverage_report(recs, n=10).vacuous_fraction == 0.5


# --- output ------------------------------------------------------------------------


def test_csv_layout():
    text = records_to_csv([record(0, 0.1, 1.0 / 3.0, False)])
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "0,0.10000000000000001,0.33333333333333331,false,true,true"


def test_write_reports(tmp_path):
    summary, records = run_experiment(ExperimentConfig.from_dict(small(trials=5)))
    paths = write_reports(tmp_path / "csv", summary, records, "csv")
    assert [p.name for p in paths] == ["summary.json", "trials.csv"]
    doc = json.loads(paths[0].read_text())
    assert "wall_time_s" not in doc
    paths = write_reports(tmp_path / "json", summary, records, "json")
    assert len(json.loads(paths[1].read_text())) == 5
    with pytest.raises(InvalidInputError):
        write_reports(tmp_path / "x", summary, records, "xml")


# --- CLI -----------------------------------------------------------------------------


def test_cli_bound_noiseless(capsys):
    assert main(["bound", "--config", str(CONFIGS / "noiseless.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["bound_value"] == 0.0


def test_cli_check_exit_codes(capsys):
    assert main(["check", "--config", str(CONFIGS / "scenario1.json")]) == 0
    assert main(["check", "--config", str(CONFIGS / "e1_violated.json")]) == 2
    out = capsys.readouterr().out
    assert '"margin"' in out
    assert main(["check", "--config", str(CONFIGS / "pls.json")]) == 0


def test_cli_bound_violated_assumption():
    assert main(["bound", "--config", str(CONFIGS / "e1_violated.json")]) == 2


def test_cli_validation_error(tmp_path):
    path = write_json(tmp_path / "c.json", small(K=99))
    assert main(["bound", "--config", str(path)]) == 1
    assert main(["bound"]) == 1
    assert main(["simulate", "--config", str(CONFIGS / "scenario1.json"), "--format", "xml"]) == 1


def test_cli_numerical_failure(tmp_path):
    H = np.ones((6, 2)).tolist()
    doc = small(n=6, K=2, H={"kind": "explicit", "matrix": H}, noise={"gamma2": 0.01, "S": {"kind": "identity"}})
    path = write_json(tmp_path / "c.json", doc)
    assert main(["bound", "--config", str(path)]) == 3


def test_cli_simulate_is_byte_identical(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", small(trials=30))
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    for fname in ("summary.json", "trials.csv"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()
    capsys.readouterr()


def test_cli_seed_override(tmp_path):
    cfg = write_json(tmp_path / "c.json", small(trials=10))
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(cfg), "--seed", "123", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "trials.csv").read_bytes() != (tmp_path / "b" / "trials.csv").read_bytes()


def test_cli_pls_demo(capsys):
    assert main(["pls-demo", "--trials", "20"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["helland_ok"]
    assert out["coverage"] >= 0.9


def test_cli_properties(capsys):
    assert main(["properties", "--suite", "projector_laws", "--suite", "unconditional"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
