"""Seeded Monte Carlo runner that checks the bounds against sampled errors.

An experiment is described by a JSON document (``schema_version`` 1). The
main fields are:

``scenario``
    ``1``, ``2``, ``3``, ``4`` or ``"pls"``.
``n``, ``K``, ``delta``, ``trials``, ``seed``
    Dimensions, failure probability, trial count and 64-bit master seed.
``regularized``, ``detail``
    Bound variant and detail level (``"detailed"`` or ``"simplified"``).
``H``
    ``{"kind": "explicit", "matrix": [[...]]}``,
    ``{"kind": "orthogonal", "scale": c, "seed": s}`` (``H^T H = c I``) or
    ``{"kind": "conditioned", "cond": k, "scale": c, "seed": s}``.
``noise``
    ``gamma2`` (a number, or ``{"e1_ratio": r}`` to place the noise so that
    ``rho_min(H^T H) / 4 = r * d * psi`` with ``d`` at ``delta / 2``, the
    level a bound at ``delta`` checks) plus ``S`` (model 2), ``A``
    (model 3) or ``V``, ``v``, ``A_list`` (model 4). Covariances are inline
    arrays or factory specs: ``identity``, ``scaled_identity``, ``diag``,
    ``geometric``, ``ar1``. ``A_list`` may be
    ``{"kind": "powers", "base": <spec>}`` for ``A_j = B^{j-1}``.
``noise_inflation``
    Multiplies the calibrated noise level (used to break E.1 on purpose).
``pls``
    ``{"p": 30, "spectrum": {"kind": "geometric", "ratio": r},
    "beta": [...] | {"kind": "ones"}, "design_seed": s,
    "tau2": number | {"e1_ratio": r}}``. It is required for ``"pls"``;
    with ``scenario: 4`` it derives the generic model-4 parameters.

Every output byte depends only on the config. Wall time goes to the
returned summary object and stderr, never to files.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .bounds import BoundReport, bound_assumption, choose_alpha, event_delta, regularized_bound, theoretical_bound
from .concentration import event_threshold
from .errors import ConfigError, InvalidInputError, RankDeficiencyError, NumericalFailure
from .matrix_core import SubspaceBasis, projector_difference_norm
from .noise_scenarios import (
    NoiseModel,
    Scenario1,
    Scenario2,
    Scenario3,
    Scenario4,
    noise_psi,
    sample_noise,
)
from .pls import (
    LinearModelInstance,
    geometric_design,
    krylov_matrix,
    krylov_trace_sum,
    pls_clean_basis,
    pls_bound,
    pls_noise_model,
    simulate_pls_instance,
    theta_matrix,
)

__all__ = [
    "SCHEMA_VERSION",
    "THREADS_ENV",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "Problem",
    "TrialRecord",
    "ExperimentSummary",
    "load_config",
    "build_problem",
    "problem_bound",
    "run_trial",
    "run_experiment",
    "coverage_report",
    "records_to_csv",
    "write_reports",
]

SCHEMA_VERSION = 1
THREADS_ENV = "SUBSPACE_BOUNDS_THREADS"
CSV_COLUMNS = ("trial_index", "empirical_error", "bound_value", "event_held", "assumption_held", "within_bound")
_MAX_SEED = 2**64


# --- config ------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; ``raw`` keeps the source document."""

    scenario: int | str
    n: int
    K: int
    delta: float
    trials: int
    seed: int
    regularized: bool
    detail: str
    raw: dict[str, Any] = field(repr=False, compare=False)

    @property
    def is_pls(self) -> bool:
        return self.scenario == "pls"

    @property
    def model_scenario(self) -> int:
        return 4 if self.is_pls else int(self.scenario)

    def with_overrides(self, seed: int | None = None, trials: int | None = None) -> "ExperimentConfig":
        doc = copy.deepcopy(self.raw)
        if seed is not None:
            doc["seed"] = seed
        if trials is not None:
            doc["trials"] = trials
        return ExperimentConfig.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        version = doc.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        scenario = doc.get("scenario")
        if scenario not in (1, 2, 3, 4, "pls"):
            raise ConfigError(f"scenario must be 1, 2, 3, 4 or 'pls', got {scenario!r}")
        try:
            n = _int(doc, "n")
            K = _int(doc, "K")
            trials = _int(doc, "trials", 1)
            seed = _int(doc, "seed", 0)
            delta = float(doc.get("delta", 0.05))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if not (1 <= K <= n):
            raise ConfigError(f"need 1 <= K <= n, got n={n}, K={K}")
        if trials < 1:
            raise ConfigError("trials must be >= 1")
        if not (0 <= seed < _MAX_SEED):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not (0 < delta < 1):
            raise ConfigError("delta must lie in (0, 1)")
        detail = doc.get("detail", "detailed")
        if detail not in ("detailed", "simplified"):
            raise ConfigError(f"detail must be 'detailed' or 'simplified', got {detail!r}")
        if scenario == "pls" and "pls" not in doc:
            raise ConfigError("scenario 'pls' needs a 'pls' block")
        if scenario != "pls" and "pls" not in doc and "noise" not in doc:
            raise ConfigError("config needs a 'noise' block")
        return cls(
            scenario=scenario,
            n=n,
            K=K,
            delta=delta,
            trials=trials,
            seed=seed,
            regularized=bool(doc.get("regularized", False)),
            detail=detail,
            raw=copy.deepcopy(doc),
        )


def _int(doc: dict[str, Any], key: str, default: int | None = None) -> int:
    if key not in doc:
        if default is None:
            raise ConfigError(f"missing required field {key!r}")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def load_config(path: str | os.PathLike[str]) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(doc)


# --- factories -----------------------------------------------------------------


def _seeded(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def _matrix_spec(spec: Any, size: int, name: str) -> np.ndarray:
    if isinstance(spec, list):
        M = np.asarray(spec, dtype=np.float64)
        if M.shape != (size, size):
            raise ConfigError(f"{name} must be {size}x{size}, got {M.shape}")
        return M
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{name} must be an inline matrix or a factory spec")
    kind = spec["kind"]
    if kind == "identity":
        return np.eye(size)
    if kind == "scaled_identity":
        return float(spec["scale"]) * np.eye(size)
    if kind == "diag":
        vals = np.asarray(spec["values"], dtype=np.float64)
        if vals.shape != (size,):
            raise ConfigError(f"{name} diag needs {size} values")
        return np.diag(vals)
    if kind == "geometric":
        return np.diag(float(spec.get("top", 1.0)) * float(spec["ratio"]) ** np.arange(size))
    if kind == "ar1":
        r = float(spec["rho"])
        idx = np.arange(size)
        return float(spec.get("scale", 1.0)) * r ** np.abs(idx[:, None] - idx[None, :])
    raise ConfigError(f"unknown matrix kind {kind!r} for {name}")


def _vector_spec(spec: Any, size: int, name: str) -> np.ndarray:
    if isinstance(spec, list):
        v = np.asarray(spec, dtype=np.float64)
        if v.shape != (size,):
            raise ConfigError(f"{name} must have length {size}")
        return v
    if isinstance(spec, dict) and spec.get("kind") == "ones":
        return np.ones(size)
    if isinstance(spec, dict) and spec.get("kind") == "gaussian":
        return _seeded(spec.get("seed", 0)).standard_normal(size)
    raise ConfigError(f"{name} must be an inline vector or {{'kind': 'ones'|'gaussian'}}")


def _basis_matrix(spec: dict[str, Any], n: int, K: int) -> np.ndarray:
    kind = spec.get("kind", "orthogonal")
    if kind == "explicit":
        H = np.asarray(spec["matrix"], dtype=np.float64)
        if H.shape != (n, K):
            raise ConfigError(f"explicit H must be {n}x{K}, got {H.shape}")
        return H
    rng = _seeded(spec.get("seed", 0))
    Q, _ = np.linalg.qr(rng.standard_normal((n, K)))
    scale = float(spec.get("scale", 1.0))
    if scale <= 0:
        raise ConfigError("H scale must be > 0")
    if kind == "orthogonal":
        return math.sqrt(scale) * Q
    if kind == "conditioned":
        cond = float(spec["cond"])
        if cond < 1:
            raise ConfigError("cond must be >= 1")
        W, _ = np.linalg.qr(rng.standard_normal((K, K)))
        # Gram eigenvalues run geometrically from scale * cond down to scale
        lam = scale * cond ** np.linspace(1.0, 0.0, K)
        return (Q * np.sqrt(lam)) @ W.T
    raise ConfigError(f"unknown H kind {kind!r}")


def _calibrated(value: Any, unit_psi_scale: float, rho_min: float, d: float, inflation: float, name: str) -> float:
    """Numeric noise level, or the one giving ``rho_min / 4 = ratio * d * psi``."""
    if isinstance(value, dict) and "e1_ratio" in value:
        ratio = float(value["e1_ratio"])
        if ratio <= 0 or unit_psi_scale <= 0:
            raise ConfigError(f"{name}: e1_ratio needs a positive ratio and nonzero noise scale")
        level = rho_min / (4.0 * ratio * d * unit_psi_scale)
    else:
        try:
            level = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} must be a number or {{'e1_ratio': r}}") from None
    return level * inflation


def _pls_instance(cfg: ExperimentConfig, inflation: float) -> LinearModelInstance:
    block = cfg.raw["pls"]
    n, K = cfg.n, cfg.K
    try:
        p = int(block["p"])
        spectrum = block.get("spectrum", {"kind": "geometric", "ratio": 0.7})
        if spectrum.get("kind") != "geometric":
            raise ConfigError("pls spectrum must be geometric")
        X = geometric_design(n, p, float(spectrum["ratio"]), int(block.get("design_seed", 0)), float(spectrum.get("top", 1.0)))
        beta = _vector_spec(block.get("beta", {"kind": "ones"}), p, "beta")
        inst = LinearModelInstance(X, beta, 0.0)
        G = krylov_matrix(inst.Sigma, inst.sigma, K)
        rho_min_theta = float(np.linalg.eigvalsh(theta_matrix(inst, G))[0])
        d = event_threshold(4, event_delta(cfg.delta), K).d_value
        # psi = tau2 * sum Tr(Sigma^{2i}) and rho_min(H^T H) = n * rho_min(Theta)
        tau2 = _calibrated(block.get("tau2", {"e1_ratio": 2}), krylov_trace_sum(inst.Sigma, K), n * rho_min_theta, d, inflation, "tau2")
    except KeyError as exc:
        raise ConfigError(f"pls block is missing {exc}") from None
    return inst.with_tau2(tau2)


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything a trial needs, built once per experiment."""

    config: ExperimentConfig
    basis: SubspaceBasis
    model: NoiseModel
    d: float
    psi: float
    alpha: float
    pls_instance: LinearModelInstance | None = None


def _noise_model(cfg: ExperimentConfig, basis: SubspaceBasis, inflation: float) -> NoiseModel:
    block = cfg.raw.get("noise", {})
    n, K, scen = cfg.n, cfg.K, cfg.model_scenario
    d = event_threshold(scen, event_delta(cfg.delta), K).d_value
    rho_min = basis.gram_summary.rho_min
    gamma_spec = block.get("gamma2", 0.0)
    if scen == 1:
        return Scenario1(_calibrated(gamma_spec, n, rho_min, d, inflation, "gamma2"))
    if scen == 2:
        S = _matrix_spec(block.get("S", {"kind": "identity"}), K, "S")
        unit = Scenario2(1.0, S)
        return Scenario2(_calibrated(gamma_spec, noise_psi(unit, n, K), rho_min, d, inflation, "gamma2"), S)
    if scen == 3:
        A = _matrix_spec(block.get("A", {"kind": "identity"}), n, "A")
        unit = Scenario3(1.0, A)
        return Scenario3(_calibrated(gamma_spec, noise_psi(unit, n, K), rho_min, d, inflation, "gamma2"), A)
    unit = _scenario4_unit(block, n, K)
    g2 = _calibrated(gamma_spec, noise_psi(unit, n, K), rho_min, d, inflation, "gamma2")
    return Scenario4(g2, unit.V, unit.v, unit.A_list)


def _scenario4_unit(block: dict[str, Any], n: int, K: int) -> Scenario4:
    spec = block.get("A_list", {"kind": "powers", "base": {"kind": "identity"}})
    if isinstance(spec, dict) and spec.get("kind") == "powers":
        B = _matrix_spec(spec["base"], n, "A_list base")
        mats, A = [], np.eye(n)
        for _ in range(K):
            mats.append(A)
            A = A @ B
    elif isinstance(spec, list) and len(spec) == K:
        mats = [np.asarray(A, dtype=np.float64) for A in spec]
    else:
        raise ConfigError(f"A_list must list {K} matrices or be a 'powers' spec")
    m = mats[0].shape[1] if mats[0].ndim == 2 else 0
    V = _matrix_spec(block.get("V", {"kind": "identity"}), m, "V")
    v = _vector_spec(block.get("v", {"kind": "ones"}), m, "v")
    return Scenario4(1.0, V, v, tuple(mats))


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Materialize the basis and noise model described by ``cfg``."""
    n, K = cfg.n, cfg.K
    inflation = float(cfg.raw.get("noise_inflation", 1.0))
    if inflation <= 0:
        raise ConfigError("noise_inflation must be > 0")
    inst = None
    try:
        if "pls" in cfg.raw:
            if cfg.scenario not in ("pls", 4):
                raise ConfigError("a 'pls' block is only valid with scenario 4 or 'pls'")
            inst = _pls_instance(cfg, inflation)
            model: NoiseModel = pls_noise_model(inst, K)
            basis = SubspaceBasis.from_matrix(pls_clean_basis(inst, K)[1])
        else:
            if cfg.model_scenario == 4:
                unit = _scenario4_unit(cfg.raw.get("noise", {}), n, K)
                basis = SubspaceBasis.from_matrix(unit.clean_basis)
            else:
                basis = SubspaceBasis.from_matrix(_basis_matrix(cfg.raw.get("H", {}), n, K))
            model = _noise_model(cfg, basis, inflation)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config field: {exc}") from None
    d = event_threshold(cfg.model_scenario, cfg.delta, K).d_value
    psi = noise_psi(model, n, K)
    alpha = choose_alpha(cfg.model_scenario, model, event_delta(cfg.delta), n, K) if cfg.regularized else 0.0
    return Problem(cfg, basis, model, d, psi, alpha, inst if cfg.is_pls else None)


def problem_bound(problem: Problem) -> BoundReport:
    """Bound for the configured variant; raises AssumptionViolatedError for failing plain runs."""
    cfg = problem.config
    if problem.pls_instance is not None:
        return pls_bound(problem.pls_instance, cfg.K, cfg.delta, cfg.regularized, cfg.detail)
    fn = regularized_bound if cfg.regularized else theoretical_bound
    return fn(cfg.model_scenario, problem.basis, problem.model, cfg.delta, cfg.detail)


# --- trials --------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    """One Monte Carlo trial.

    ``event_held`` is the high-probability event at level ``delta``: the
    spectral event ``rho(E^T E) <= d psi`` for models 1 to 3 and the
    column-sum event ``sum_j ||E_j||^2 <= d psi`` for model 4 and PLS.
    ``spectral_event_held`` always records the former. The bound itself uses
    the looser threshold at ``delta / 2``, so ``event_held`` implies it.
    """

    trial_index: int
    seed_stream: tuple[int, int]
    empirical_error: float
    bound_value: float
    event_held: bool
    assumption_held: bool
    within_bound: bool
    spectral_event_held: bool


def run_trial(problem: Problem, trial_index: int, bound_value: float, assumption_held: bool) -> TrialRecord:
    cfg = problem.config
    n, K = cfg.n, cfg.K
    H = problem.basis.H
    if problem.pls_instance is not None:
        draw = simulate_pls_instance(problem.pls_instance, K, cfg.seed, trial_index)
        E = draw.H_hat - H
    else:
        E = sample_noise(problem.model, n, K, cfg.seed, trial_index)
    H_hat = H + E
    try:
        err = projector_difference_norm(problem.basis, H_hat, problem.alpha) ** 2 / n
    except RankDeficiencyError as exc:
        raise NumericalFailure(f"trial {trial_index}: estimated basis is rank deficient") from exc
    threshold = problem.d * problem.psi
    spectral = float(np.linalg.eigvalsh(E.T @ E)[-1]) <= threshold
    column_sum = float(np.sum(E * E)) <= threshold
    event = column_sum if cfg.model_scenario == 4 else spectral
    return TrialRecord(
        trial_index=trial_index,
        seed_stream=(cfg.seed, trial_index),
        empirical_error=float(err),
        bound_value=float(bound_value),
        event_held=bool(event),
        assumption_held=bool(assumption_held),
        within_bound=bool(err <= bound_value),
        spectral_event_held=bool(spectral),
    )


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if value < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1")
        return value
    return min(4, os.cpu_count() or 1)


# --- summaries -----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSummary:
    """Aggregate statistics with binomial standard errors.

    ``vacuous_fraction`` is the share of trials whose bound is at least
    ``1 / n``, the largest possible error, so coverage there is automatic.
    """

    n_trials: int
    coverage: float
    coverage_se: float
    event_frequency: float
    event_se: float
    spectral_event_frequency: float
    assumption_held: bool
    mean_error: float
    max_error: float
    mean_bound: float
    vacuous_fraction: float
    mean_error_to_bound: float
    config: dict[str, Any] | None = None
    bound: dict[str, Any] | None = None
    wall_time_s: float | None = field(default=None, compare=False)

    def to_dict(self, include_wall_time: bool = False) -> dict[str, Any]:
        out = asdict(self)
        if not include_wall_time:
            out.pop("wall_time_s")
        return out


def _binomial_se(p: float, N: int) -> float:
    return math.sqrt(p * (1.0 - p) / N)


def coverage_report(records: Sequence[TrialRecord], n: int | None = None) -> ExperimentSummary:
    """Summarize trial records; ``n`` (rows of ``H``) enables the vacuity count."""
    if not records:
        raise InvalidInputError("coverage_report needs at least one record")
    N = len(records)
    errors = np.array([r.empirical_error for r in records])
    bounds = np.array([r.bound_value for r in records])
    cov = sum(r.within_bound for r in records) / N
    ev = sum(r.event_held for r in records) / N
    ratio = np.where(bounds > 0, errors / np.where(bounds > 0, bounds, 1.0), np.where(errors > 0, np.inf, 0.0))
    vac = float(np.mean(bounds >= 1.0 / n)) if n else float("nan")
    return ExperimentSummary(
        n_trials=N,
        coverage=cov,
        coverage_se=_binomial_se(cov, N),
        event_frequency=ev,
        event_se=_binomial_se(ev, N),
        spectral_event_frequency=sum(r.spectral_event_held for r in records) / N,
        assumption_held=all(r.assumption_held for r in records),
        mean_error=float(errors.mean()),
        max_error=float(errors.max()),
        mean_bound=float(bounds.mean()),
        vacuous_fraction=vac,
        mean_error_to_bound=float(ratio.mean()),
    )


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> tuple[ExperimentSummary, list[TrialRecord]]:
    """Run all trials of ``cfg`` and summarize them.

    Raises
    ------
    AssumptionViolatedError
        For a plain-bound run whose basis fails E.1 (or the PLS assumption).
    """
    start = time.perf_counter()
    problem = build_problem(cfg)
    report = problem_bound(problem)
    workers = threads if threads is not None else _worker_count()
    indices = range(cfg.trials)

    def task(i: int) -> TrialRecord:
        return run_trial(problem, i, report.bound_value, report.assumption_holds)

    if workers <= 1 or cfg.trials == 1:
        records = [task(i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(task, indices, chunksize=16))
    records.sort(key=lambda r: r.trial_index)
    base = coverage_report(records, cfg.n)
    summary = ExperimentSummary(
        **{
            **asdict(base),
            "config": copy.deepcopy(cfg.raw),
            "bound": report.to_dict(),
            "wall_time_s": time.perf_counter() - start,
        }
    )
    return summary, records


# --- output --------------------------------------------------------------------


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def records_to_csv(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def _json_safe(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _dumps(obj: Any) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


def write_reports(
    out_dir: str | os.PathLike[str],
    summary: ExperimentSummary,
    records: Sequence[TrialRecord],
    fmt: str = "csv",
) -> list[Path]:
    """Write ``summary.json`` and ``trials.csv`` or ``trials.json``; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "summary.json"]
    paths[0].write_text(_dumps(summary.to_dict()))
    if fmt == "csv":
        path = out / "trials.csv"
        path.write_text(records_to_csv(records))
    elif fmt == "json":
        path = out / "trials.json"
        path.write_text(_dumps([asdict(r) for r in records]))
    else:
        raise InvalidInputError(f"unknown format {fmt!r}")
    paths.append(path)
    return paths
