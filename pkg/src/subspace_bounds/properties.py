"""Invariant suites runnable from the command line.

Each suite draws its own seeded random instances and returns one
:class:`PropertyResult` per invariant, so failures are reported rather
than raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bounds import eigen_control_checks, trace_trick
from .concentration import laurent_massart_bound, vershynin_gram_bound
from .matrix_core import principal_angles, projector, regularized_projector
from .pls import LinearModelInstance, geometric_design, krylov_matrix, nipals_weights

__all__ = ["PropertyResult", "SUITES", "run_suites"]


@dataclass(frozen=True)
class PropertyResult:
    suite: str
    name: str
    passed: bool
    detail: str


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(salt,))))


def _random_basis(rng: np.random.Generator, n: int, K: int) -> np.ndarray:
    # mild conditioning so every check runs at its stated tolerance
    Q, _ = np.linalg.qr(rng.standard_normal((n, K)))
    W, _ = np.linalg.qr(rng.standard_normal((K, K)))
    return (Q * rng.uniform(0.5, 3.0, K)) @ W.T


def projector_laws(seed: int, instances: int = 100) -> list[PropertyResult]:
    rng = _rng(seed, 1)
    worst = {"idempotence": 0.0, "symmetry": 0.0, "basis_invariance": 0.0, "sin_theta": 0.0, "alpha_zero": 0.0}
    for _ in range(instances):
        n = int(rng.integers(6, 30))
        K = int(rng.integers(1, min(6, n) + 1))
        H = _random_basis(rng, n, K)
        P = projector(H)
        R = rng.standard_normal((K, K)) + 3 * np.eye(K)
        H2 = _random_basis(rng, n, K)
        worst["idempotence"] = max(worst["idempotence"], np.abs(P @ P - P).max())
        worst["symmetry"] = max(worst["symmetry"], np.abs(P - P.T).max())
        worst["basis_invariance"] = max(worst["basis_invariance"], np.abs(projector(H @ R) - P).max())
        gap = abs(math.sin(principal_angles(H, H2).max()) - np.linalg.norm(P - projector(H2), 2))
        worst["sin_theta"] = max(worst["sin_theta"], gap)
        worst["alpha_zero"] = max(worst["alpha_zero"], np.abs(regularized_projector(H, 0.0) - P).max())
    tol = {"idempotence": 1e-10, "symmetry": 1e-12, "basis_invariance": 1e-10, "sin_theta": 1e-8, "alpha_zero": 1e-12}
    return [PropertyResult("projector_laws", k, bool(v <= tol[k]), f"max deviation {v:.3e} (tol {tol[k]:g})") for k, v in worst.items()]


def unconditional_inequalities(seed: int, instances: int = 100) -> list[PropertyResult]:
    rng = _rng(seed, 2)
    trace_bad = lemma_bad = bias_bad = 0
    for _ in range(instances):
        B1, B2 = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
        lhs, rhs = trace_trick(B1.T @ B1, B2.T @ B2)
        trace_bad += lhs > rhs * (1 + 1e-12)
        n, K = int(rng.integers(5, 20)), int(rng.integers(1, 5))
        H = _random_basis(rng, n, K)
        alpha = float(rng.exponential(1.0))
        checks = {c.name: c for c in eigen_control_checks(H, np.zeros_like(H), alpha)}
        lemma_bad += not checks["shifted_gram_lower"].holds
        rho_min = float(np.linalg.eigvalsh(H.T @ H)[0])
        bias = np.linalg.norm(regularized_projector(H, alpha) - projector(H), 2) ** 2
        bias_bad += bias > alpha / rho_min * (1 + 1e-12)
    return [
        PropertyResult("unconditional", "trace_trick", trace_bad == 0, f"{trace_bad} violations / {instances}"),
        PropertyResult("unconditional", "shifted_gram_lemma", lemma_bad == 0, f"{lemma_bad} violations / {instances}"),
        PropertyResult("unconditional", "regularization_bias", bias_bad == 0, f"{bias_bad} violations / {instances}"),
    ]


def eigen_control(seed: int, trials: int = 300) -> list[PropertyResult]:
    """Conditional checks: with ``alpha >= 2 sum_j ||E_j||^2`` the regularized set must hold."""
    rng = _rng(seed, 3)
    n, K = 60, 3
    H = _random_basis(rng, n, K) * 4.0
    gamma2 = 0.01
    bad = 0
    for _ in range(trials):
        E = math.sqrt(gamma2) * rng.standard_normal((n, K))
        alpha = 2.0 * float(np.sum(E * E)) * rng.uniform(1.0, 2.0)
        names = ("regularized_event_rho_EtE", "regularized_gram_lower", "regularized_gram_difference", "regularized_difference_ratio")
        checks = {c.name: c for c in eigen_control_checks(H, E, alpha)}
        bad += not all(checks[name].holds for name in names)
    return [PropertyResult("eigen_control", "conditional_set", bad == 0, f"{bad} violations / {trials} in-event draws")]


def deviation_coverage(seed: int, draws: int = 20000) -> list[PropertyResult]:
    rng = _rng(seed, 4)
    delta = 0.05
    out = []
    for label, U in (("identity_5", np.eye(5)), ("diag_4_1_1", np.diag([4.0, 1.0, 1.0]))):
        Z = rng.standard_normal((draws, U.shape[0]))
        q = np.einsum("ij,jk,ik->i", Z, U, Z)
        cov = float(np.mean(q <= laurent_massart_bound(1.0, U, delta)))
        floor = 1 - delta - 3 * math.sqrt(delta * (1 - delta) / draws)
        out.append(PropertyResult("deviation", f"laurent_massart_{label}", cov >= floor, f"coverage {cov:.4f} (floor {floor:.4f})"))
    n, K, reps = 500, 5, max(200, draws // 40)
    bound = vershynin_gram_bound(n, K, delta)
    hits = 0
    for _ in range(reps):
        Z = rng.standard_normal((n, K))
        hits += np.abs(np.linalg.eigvalsh(Z.T @ Z / n - np.eye(K))).max() <= bound
    cov = hits / reps
    floor = 1 - delta - 3 * math.sqrt(delta * (1 - delta) / reps)
    out.append(PropertyResult("deviation", "gram_deviation", cov >= floor, f"coverage {cov:.4f} (floor {floor:.4f})"))
    return out


def helland(seed: int, instances: int = 20) -> list[PropertyResult]:
    rng = _rng(seed, 5)
    worst = 0.0
    for i in range(instances):
        K = int(rng.integers(1, 5))
        X = geometric_design(100, 20, 0.8, seed=int(rng.integers(2**32)))
        Y = X @ rng.standard_normal(20) + 0.5 * rng.standard_normal(100)
        inst = LinearModelInstance(X, np.zeros(20), 0.0)
        G_hat = krylov_matrix(inst.Sigma, X.T @ Y / 100, K)
        worst = max(worst, float(principal_angles(nipals_weights(X, Y, K), G_hat).max()))
    return [PropertyResult("helland", "weight_span_equals_krylov_span", worst < 1e-6, f"max principal angle {worst:.3e}")]


SUITES: dict[str, Callable[[int], list[PropertyResult]]] = {
    "projector_laws": projector_laws,
    "unconditional": unconditional_inequalities,
    "eigen_control": eigen_control,
    "deviation": deviation_coverage,
    "helland": helland,
}


def run_suites(seed: int = 0, names: list[str] | None = None) -> list[PropertyResult]:
    results: list[PropertyResult] = []
    for name in names or list(SUITES):
        results.extend(SUITES[name](seed))
    return results
