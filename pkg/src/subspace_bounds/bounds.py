"""High-probability bounds on the projector error ``|||P_[H] - P_[H_hat]|||^2 / n``.

A plain bound needs the well-conditioning assumption
``rho_min(H^T H) / 4 > d * psi`` (called E.1 below); the ridge-regularized
bound does not, and instead pays a bias ``alpha / rho_min(H^T H)``.

Both are assembled the same way. A deterministic "skeleton" inequality
bounds ``||(P - P_hat) u||^2`` by a weighted sum of three data-dependent
terms ``I``, ``II`` and ``III``. Each term is then bounded uniformly in the
unit vector ``u`` by a Gaussian deviation inequality at failure
probability ``delta / 2``, while the event controlling ``E^T E`` gets the
other ``delta / 2``. So a bound at level ``delta`` checks E.1 and picks
``alpha`` with the event constant at ``event_delta(delta) = delta / 2``. Every factor that enters a bound is recorded in
``BoundReport.constants_log``.

Two detail levels are offered. ``"detailed"`` keeps the per-term
quantities (traces, ``rho(S M^{-1})``, ...). ``"simplified"`` replaces them
by worst cases in ``Cond(H^T H)``, ``rho_min(H^T H)`` and the noise scale,
so it is never smaller than the detailed value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Literal, NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .concentration import event_threshold, g
from .errors import AssumptionViolatedError, InvalidInputError, InvalidParameterError
from .matrix_core import SpectralSummary, SubspaceBasis, as_basis, as_matrix, check_symmetric
from .noise_scenarios import NoiseModel, Scenario1, Scenario2, Scenario3, Scenario4, noise_psi

__all__ = [
    "PLAIN_COEFFICIENTS",
    "REGULARIZED_COEFFICIENTS",
    "BoundReport",
    "SkeletonTerms",
    "AssumptionCheck",
    "InequalityCheck",
    "check_assumption_e1",
    "skeleton_terms",
    "term_ii_decomposition",
    "skeleton_combine",
    "regularized_skeleton_combine",
    "choose_alpha",
    "EVENT_SHARE",
    "event_delta",
    "bound_assumption",
    "theoretical_bound",
    "regularized_bound",
    "eigen_control_checks",
    "trace_trick",
]

log = logging.getLogger(__name__)

Detail = Literal["detailed", "simplified"]

#: ``(c_I, c_II0, c_II1, c_III0, c_III1, c_III3)`` for
#: ``c_I I + (c_II0 + c_II1 k) II / rho_min + (c_III0 + c_III1 k + c_III3 k^3) III``.
#: Share of the failure probability given to the ``E^T E`` event.
EVENT_SHARE = 0.5

PLAIN_COEFFICIENTS = (16.0, 16.0, 32.0, 5.0, 64.0, 128.0)
REGULARIZED_COEFFICIENTS = (16.0, 8.0, 64.0, 9.0, 256.0, 128.0)


def _collapsed(coeffs: tuple[float, ...], ii_scale: float) -> float:
    """Single factor ``F`` with ``combination <= F k^3 * max-term`` for ``k >= 1``.

    ``ii_scale`` is the worst-case ratio of the normalized II bound to the
    I and III bounds (8.5 plain, 17 regularized).
    """
    c1, c20, c21, c30, c31, c33 = coeffs
    return c1 + (c20 + c21) * ii_scale + (c30 + c31 + c33)


#: 16 + 48 * 8.5 + 197 = 621
PLAIN_FACTOR = _collapsed(PLAIN_COEFFICIENTS, 8.5)
#: 16 + 72 * 17 + 393 = 1633
REGULARIZED_FACTOR = _collapsed(REGULARIZED_COEFFICIENTS, 17.0)


@dataclass(frozen=True)
class BoundReport:
    """An evaluated bound together with every constant that produced it.

    ``bound_value`` is on the squared scale ``|||P - P_hat|||^2 / n``;
    ``dist_bound`` is its square root, on the scale of
    ``|||P - P_hat||| / sqrt(n)``.
    """

    scenario: int
    delta: float
    assumption_holds: bool
    assumption_margin: float
    bound_value: float
    detail_level: str
    regularized: bool
    alpha: float = 0.0
    constants_log: tuple[tuple[str, float], ...] = field(default=())

    @property
    def dist_bound(self) -> float:
        return math.sqrt(self.bound_value)

    def constant(self, name: str) -> float:
        for key, value in self.constants_log:
            if key == name:
                return value
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "delta": self.delta,
            "assumption_holds": self.assumption_holds,
            "assumption_margin": self.assumption_margin,
            "alpha": self.alpha,
            "bound_value": self.bound_value,
            "dist_bound": self.dist_bound,
            "detail_level": self.detail_level,
            "regularized": self.regularized,
            "constants_log": dict(self.constants_log),
        }


@dataclass(frozen=True)
class SkeletonTerms:
    """The three skeleton quadratic forms evaluated at the unit vector ``u``."""

    term_I: float
    term_II: float
    term_III: float
    u: np.ndarray | None = field(default=None, compare=False, repr=False)


class AssumptionCheck(NamedTuple):
    holds: bool
    margin: float


class InequalityCheck(NamedTuple):
    name: str
    lhs: float
    rhs: float
    holds: bool


def _model_dims(model: NoiseModel, basis: SubspaceBasis) -> tuple[int, int]:
    return basis.n, basis.K


def _check_scenario(scenario: int, model: NoiseModel) -> int:
    if scenario not in (1, 2, 3, 4):
        raise InvalidParameterError(f"scenario must be 1..4, got {scenario!r}")
    if model.scenario != scenario:
        raise InvalidParameterError(f"scenario {scenario} given with a model for scenario {model.scenario}")
    return scenario


def _check_detail(detail: str) -> str:
    if detail not in ("detailed", "simplified"):
        raise InvalidParameterError(f"detail must be 'detailed' or 'simplified', got {detail!r}")
    return detail


def check_assumption_e1(H: SubspaceBasis | ArrayLike, model: NoiseModel, delta: float) -> AssumptionCheck:
    """Test ``rho_min(H^T H) / 4 > d * psi`` (strict).

    Returns
    -------
    AssumptionCheck
        ``holds`` and ``margin = rho_min / 4 - d * psi``; a tie is a failure.
    """
    basis = as_basis(H)
    n, K = basis.n, basis.K
    d = event_threshold(model.scenario, delta, K).d_value
    lhs = basis.gram_summary.rho_min / 4.0
    rhs = d * noise_psi(model, n, K)
    return AssumptionCheck(bool(lhs > rhs), float(lhs - rhs))


def event_delta(delta: float) -> float:
    """Failure probability of the ``E^T E`` event inside a bound at level ``delta``."""
    return EVENT_SHARE * float(delta)


def bound_assumption(H: SubspaceBasis | ArrayLike, model: NoiseModel, delta: float) -> AssumptionCheck:
    """E.1 as required by :func:`theoretical_bound` at level ``delta``."""
    return check_assumption_e1(H, model, event_delta(delta))


def _unit(u: ArrayLike, n: int) -> np.ndarray:
    vec = np.asarray(u, dtype=np.float64).reshape(-1)
    if vec.shape[0] != n or not np.all(np.isfinite(vec)):
        raise InvalidInputError(f"u must be a finite vector of length {n}")
    if abs(float(vec @ vec) - 1.0) > 1e-12:
        raise InvalidInputError("u must have unit norm")
    return vec


def _noise(E: ArrayLike, basis: SubspaceBasis) -> np.ndarray:
    arr = as_matrix(E, "E")
    if arr.shape != basis.H.shape:
        raise InvalidInputError(f"E has shape {arr.shape}, expected {basis.H.shape}")
    return arr


def skeleton_terms(
    H: SubspaceBasis | ArrayLike, E: ArrayLike, u: ArrayLike, alpha: float = 0.0
) -> SkeletonTerms:
    """The three terms of the skeleton inequality at a unit vector ``u``.

    With ``c = (H^T H + alpha I)^{-1} H^T u``:

    * ``I = ||E c||^2``
    * ``II = ||(H_hat^T H_hat - H^T H) c||^2``
    * ``III = (E^T u)^T (H^T H + alpha I)^{-1} (E^T u)``

    At ``alpha = 0`` the last one equals ``||H (H^T H)^{-1} E^T u||^2``.
    """
    basis = as_basis(H)
    Em = _noise(E, basis)
    vec = _unit(u, basis.n)
    coords = basis.solve(basis.H.T @ vec, alpha)
    H_hat = basis.H + Em
    gram_diff = H_hat.T @ H_hat - basis.gram
    w = Em.T @ vec
    return SkeletonTerms(
        term_I=float(np.sum((Em @ coords) ** 2)),
        term_II=float(np.sum((gram_diff @ coords) ** 2)),
        term_III=float(w @ basis.solve(w, alpha)),
        u=vec.copy(),
    )


def term_ii_decomposition(H: SubspaceBasis | ArrayLike, E: ArrayLike, u: ArrayLike) -> tuple[float, float]:
    """Return ``(II, 4||E^T H c||^2 + 4||H^T E c||^2 + 2||E^T E c||^2)``."""
    basis = as_basis(H)
    Em = _noise(E, basis)
    vec = _unit(u, basis.n)
    c = basis.solve(basis.H.T @ vec)
    Hm = basis.H
    H_hat = Hm + Em
    lhs = float(np.sum(((H_hat.T @ H_hat - basis.gram) @ c) ** 2))
    rhs = (
        4.0 * float(np.sum((Em.T @ (Hm @ c)) ** 2))
        + 4.0 * float(np.sum((Hm.T @ (Em @ c)) ** 2))
        + 2.0 * float(np.sum((Em.T @ (Em @ c)) ** 2))
    )
    return lhs, rhs


def _combine(coeffs: tuple[float, ...], terms: SkeletonTerms, cond: float, ii_divisor: float) -> float:
    c1, c20, c21, c30, c31, c33 = coeffs
    return (
        c1 * terms.term_I
        + (c20 + c21 * cond) * terms.term_II / ii_divisor
        + (c30 + c31 * cond + c33 * cond**3) * terms.term_III
    )


def skeleton_combine(terms: SkeletonTerms, gram: SpectralSummary) -> float:
    """``16 I + (16 + 32 k) II / rho_min + (5 + 64 k + 128 k^3) III`` with ``k = Cond(H^T H)``."""
    return _combine(PLAIN_COEFFICIENTS, terms, gram.cond, gram.rho_min)


def regularized_skeleton_combine(
    terms_alpha: SkeletonTerms, gram: SpectralSummary, rho_min_gram_hat_alpha: float
) -> float:
    """``16 I + (8 + 64 k) II / r + (9 + 256 k + 128 k^3) III``.

    ``r`` is ``rho_min(H_hat^T H_hat + alpha I)`` and ``k = Cond(H^T H)``.
    """
    if rho_min_gram_hat_alpha <= 0:
        raise InvalidParameterError("rho_min of the regularized estimated Gram matrix must be > 0")
    return _combine(REGULARIZED_COEFFICIENTS, terms_alpha, gram.cond, rho_min_gram_hat_alpha)


def choose_alpha(scenario: int, model: NoiseModel, delta: float, n: int, K: int) -> float:
    """Ridge parameter ``alpha = 2 d psi``."""
    _check_scenario(scenario, model)
    return 2.0 * event_threshold(scenario, delta, K).d_value * noise_psi(model, n, K)


# --- per-term uniform bounds ---------------------------------------------------


@dataclass(frozen=True)
class _TermBounds:
    """Uniform-in-``u`` bounds on I, II / divisor and III at failure ``delta/2``."""

    term_I: float
    term_II_normalized: float
    term_III: float
    # worst-case scale used by the simplified form, see _simplified_*
    log: tuple[tuple[str, float], ...]


def _half_delta_constant(model: NoiseModel, delta: float, K: int) -> tuple[str, float]:
    if isinstance(model, Scenario4):
        return "C_column_union", g(math.log(2.0 * K / delta))
    return "C_half_delta", g(math.log(2.0 / delta))


def _spectral_pieces(basis: SubspaceBasis, model: NoiseModel) -> dict[str, float]:
    s = basis.gram_summary
    M_inv = basis.gram_inverse
    out = {"rho": s.rho, "rho_min": s.rho_min, "cond": s.cond, "trace_gram": s.trace}
    if isinstance(model, (Scenario1, Scenario2)):
        S = np.eye(basis.K) if isinstance(model, Scenario1) else model.S
        # rho(S M^{-1}) = rho(M^{-1/2} S M^{-1/2})
        V, lam = basis.gram_eigen.vectors, basis.gram_eigen.values
        Wh = V / np.sqrt(lam)
        out["rho_S"] = float(np.linalg.eigvalsh(S)[-1])
        out["trace_S"] = float(np.trace(S))
        out["rho_S_Minv"] = float(np.linalg.eigvalsh(check_symmetric(Wh.T @ S @ Wh))[-1])
        out["trace_Minv_S"] = float(np.sum(M_inv * S))
    elif isinstance(model, Scenario3):
        out["rho_A"] = model.rho_A
        out["trace_A"] = float(np.trace(model.A))
        out["trace_HtAH"] = float(np.trace(basis.H.T @ model.A @ basis.H))
        out["trace_Minv"] = float(np.trace(M_inv))
    else:
        out["trace_sum"] = model.trace_sum
    return out


def _term_bounds(
    basis: SubspaceBasis, model: NoiseModel, delta: float, regularized: bool
) -> tuple[_TermBounds, dict[str, float]]:
    """Uniform bounds on the three skeleton terms.

    In the plain case II is divided by ``rho_min(H^T H)`` and the ``E^T E``
    part uses ``rho(E^T E) <= rho_min / 4``. In the regularized case II is
    divided by ``rho_min(H_hat^T H_hat + alpha I) >= max(alpha, rho_min / 2)``
    and the ``E^T E`` part uses ``rho(E^T E) <= alpha / 2``.
    """
    n, K = basis.n, basis.K
    name, C = _half_delta_constant(model, delta, K)
    p = _spectral_pieces(basis, model)
    gamma2 = model.gamma2
    rho_min, cond = p["rho_min"], p["cond"]
    # factor on the cross terms (4 plain, 8 regularized) and on the E^T E term (1/2 or 1)
    cross = 8.0 if regularized else 4.0
    quad = 1.0 if regularized else 0.5
    if isinstance(model, (Scenario1, Scenario2)):
        r = p["rho_S_Minv"]
        t1 = C * n * gamma2 * r
        t2 = C * gamma2 * (cross * r * p["trace_gram"] / rho_min + cross * p["trace_S"] / rho_min + quad * n * r)
        t3 = C * gamma2 * p["trace_Minv_S"]
    elif isinstance(model, Scenario3):
        t1 = C * gamma2 * p["trace_A"] / rho_min
        t2 = C * gamma2 * (
            cross * K * p["rho_A"] / rho_min
            + cross * p["trace_HtAH"] / rho_min**2
            + quad * p["trace_A"] / rho_min
        )
        t3 = C * gamma2 * p["rho_A"] * p["trace_Minv"]
    else:
        T = p["trace_sum"]
        t1 = C * gamma2 * T / rho_min
        t2 = C * gamma2 * T * (cross + cross * cond + quad) / rho_min
        t3 = C * gamma2 * T / rho_min
    p[name] = C
    return _TermBounds(t1, t2, t3, tuple((k, float(v)) for k, v in p.items())), p


def _worst_case_scale(model: NoiseModel, p: dict[str, float], n: int, K: int, delta: float) -> tuple[float, dict[str, float]]:
    """``W`` such that each uniform term bound is at most ``W`` (II at most ``ii_scale k W``)."""
    rho_min = p["rho_min"]
    g2 = model.gamma2
    if isinstance(model, (Scenario1, Scenario2)):
        return p["C_half_delta"] * g2 * p["rho_S"] / rho_min, {}
    if isinstance(model, Scenario3):
        Q = max(K * p["rho_A"], p["trace_A"])
        return p["C_half_delta"] * g2 * Q / (n * rho_min), {"Q_scenario3": Q}
    b = g(math.log(2.0 / delta)) / math.log(1.0 / delta)
    x = math.log(K / delta)
    return b * x * g2 * p["trace_sum"] / (n * rho_min), {"b_delta": b, "log_K_over_delta": x}


def _assumption_fields(basis: SubspaceBasis, model: NoiseModel, delta: float) -> tuple[AssumptionCheck, float, float]:
    thr = event_threshold(model.scenario, event_delta(delta), basis.K)
    psi = noise_psi(model, basis.n, basis.K)
    check = AssumptionCheck(
        bool(basis.gram_summary.rho_min / 4.0 > thr.d_value * psi),
        float(basis.gram_summary.rho_min / 4.0 - thr.d_value * psi),
    )
    return check, thr.d_value, psi


def theoretical_bound(
    scenario: int,
    H: SubspaceBasis | ArrayLike,
    model: NoiseModel,
    delta: float,
    detail: Detail = "detailed",
) -> BoundReport:
    """Plain bound on ``|||P_[H] - P_[H_hat]|||^2 / n`` holding with probability ``1 - delta``.

    Parameters
    ----------
    scenario : int
        Noise model number, must match ``model``.
    H : SubspaceBasis or array_like
        Clean basis with full column rank.
    model : NoiseModel
    delta : float
        Failure probability in ``(0, 1)``.
    detail : {"detailed", "simplified"}

    Raises
    ------
    AssumptionViolatedError
        When ``rho_min(H^T H) / 4 <= d * psi`` with ``d`` taken at ``delta / 2``.
    """
    _check_scenario(scenario, model)
    _check_detail(detail)
    basis = as_basis(H)
    n, K = basis.n, basis.K
    check, d, psi = _assumption_fields(basis, model, delta)
    if not check.holds:
        raise AssumptionViolatedError(
            f"rho_min(H^T H)/4 = {basis.gram_summary.rho_min / 4:.6g} does not exceed d*psi = {d * psi:.6g}"
        )
    tb, p = _term_bounds(basis, model, delta, regularized=False)
    cond = p["cond"]
    c1, c20, c21, c30, c31, c33 = PLAIN_COEFFICIENTS
    detailed = (
        c1 * tb.term_I + (c20 + c21 * cond) * tb.term_II_normalized + (c30 + c31 * cond + c33 * cond**3) * tb.term_III
    ) / n
    W, extra = _worst_case_scale(model, p, n, K, delta)
    simplified = PLAIN_FACTOR * cond**3 * W
    value = detailed if detail == "detailed" else simplified
    entries = [
        ("delta_event", event_delta(delta)),
        ("d", d),
        ("psi", psi),
        *tb.log,
        *extra.items(),
        ("coef_I", c1),
        ("coef_II", c20 + c21 * cond),
        ("coef_III", c30 + c31 * cond + c33 * cond**3),
        ("term_I_bound", tb.term_I),
        ("term_II_over_rho_min_bound", tb.term_II_normalized),
        ("term_III_bound", tb.term_III),
        ("simplified_factor", PLAIN_FACTOR),
        ("detailed_value", detailed),
        ("simplified_value", simplified),
    ]
    log.debug("plain bound scenario=%d detail=%s value=%.17g", scenario, detail, value)
    return BoundReport(
        scenario=scenario,
        delta=float(delta),
        assumption_holds=check.holds,
        assumption_margin=check.margin,
        bound_value=float(value),
        detail_level=detail,
        regularized=False,
        alpha=0.0,
        constants_log=tuple((k, float(v)) for k, v in entries),
    )


def regularized_bound(
    scenario: int,
    H: SubspaceBasis | ArrayLike,
    model: NoiseModel,
    delta: float,
    detail: Detail = "detailed",
) -> BoundReport:
    """Bound on ``|||P_[H] - P_[H_hat]_alpha|||^2 / n`` with ``alpha = choose_alpha(...)``.

    No assumption on ``rho_min(H^T H)`` is needed. The total is
    ``2 * bias + 2 * stochastic`` (from ``(a + b)^2 <= 2a^2 + 2b^2``), where
    ``bias = alpha / (n rho_min(H^T H))`` and ``alpha`` is
    ``choose_alpha`` at ``delta / 2``. The E.1 verdict is still reported for
    information.
    """
    _check_scenario(scenario, model)
    _check_detail(detail)
    basis = as_basis(H)
    n, K = basis.n, basis.K
    check, d, psi = _assumption_fields(basis, model, delta)
    alpha = choose_alpha(scenario, model, event_delta(delta), n, K)
    tb, p = _term_bounds(basis, model, delta, regularized=True)
    cond, rho_min = p["cond"], p["rho_min"]
    c1, c20, c21, c30, c31, c33 = REGULARIZED_COEFFICIENTS
    stochastic = (
        c1 * tb.term_I + (c20 + c21 * cond) * tb.term_II_normalized + (c30 + c31 * cond + c33 * cond**3) * tb.term_III
    ) / n
    bias = alpha / (n * rho_min)
    detailed = 2.0 * bias + 2.0 * stochastic
    W, extra = _worst_case_scale(model, p, n, K, delta)
    if isinstance(model, Scenario3):
        # the bias scales like rho(A) / rho_min, the stochastic part like Q / (n rho_min)
        scale = model.gamma2 * (4.0 * d + 2.0 * REGULARIZED_FACTOR * p["C_half_delta"])
        simplified = scale * max(cond**3 * extra["Q_scenario3"] / (n * rho_min), p["rho_A"] / rho_min)
    else:
        simplified = 2.0 * bias + 2.0 * REGULARIZED_FACTOR * cond**3 * W
    value = detailed if detail == "detailed" else simplified
    entries = [
        ("delta_event", event_delta(delta)),
        ("d", d),
        ("psi", psi),
        ("alpha", alpha),
        ("composition_factor", 2.0),
        *tb.log,
        *extra.items(),
        ("bias", bias),
        ("stochastic", stochastic),
        ("coef_I", c1),
        ("coef_II", c20 + c21 * cond),
        ("coef_III", c30 + c31 * cond + c33 * cond**3),
        ("term_I_bound", tb.term_I),
        ("term_II_over_divisor_bound", tb.term_II_normalized),
        ("term_III_bound", tb.term_III),
        ("simplified_factor", REGULARIZED_FACTOR),
        ("detailed_value", detailed),
        ("simplified_value", simplified),
    ]
    log.debug("regularized bound scenario=%d alpha=%.17g value=%.17g", scenario, alpha, value)
    return BoundReport(
        scenario=scenario,
        delta=float(delta),
        assumption_holds=check.holds,
        assumption_margin=check.margin,
        bound_value=float(value),
        detail_level=detail,
        regularized=True,
        alpha=float(alpha),
        constants_log=tuple((k, float(v)) for k, v in entries),
    )


def _rel_leq(lhs: float, rhs: float, rtol: float = 1e-10) -> bool:
    return lhs <= rhs + rtol * max(abs(lhs), abs(rhs))


def eigen_control_checks(H: SubspaceBasis | ArrayLike, E: ArrayLike, alpha: float) -> list[InequalityCheck]:
    """Evaluate the eigenvalue-control inequalities on one noise draw.

    Only ``shifted_gram_lower`` is unconditional. The ``regularized_*`` checks
    are guaranteed when ``sum_j ||E_j||^2 <= alpha / 2``, and the
    ``plain_*`` checks when ``rho(E^T E) <= rho_min(H^T H) / 4``.
    Comparisons allow a relative slack of 1e-10 for rounding.
    """
    basis = as_basis(H)
    Em = _noise(E, basis)
    alpha = float(alpha)
    if alpha < 0:
        raise InvalidParameterError("alpha must be >= 0")
    s = basis.gram_summary
    eye = np.eye(basis.K)
    H_hat = basis.H + Em
    gram_hat = H_hat.T @ H_hat
    gram_hat = 0.5 * (gram_hat + gram_hat.T)
    diff = gram_hat - basis.gram
    rho_EtE = float(np.linalg.eigvalsh(Em.T @ Em)[-1])
    rho_diff = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.T)))))
    rmin_hat_alpha = float(np.linalg.eigvalsh(gram_hat + alpha * eye)[0])
    rmin_alpha = float(np.linalg.eigvalsh(basis.gram + alpha * eye)[0])
    rmin_hat = float(np.linalg.eigvalsh(gram_hat)[0])
    items = [
        ("regularized_event_rho_EtE", rho_EtE, alpha / 2.0),
        ("regularized_gram_lower", s.rho_min / 2.0, rmin_hat_alpha),
        ("regularized_gram_difference", rho_diff, 2.0 * (alpha + s.rho)),
        ("regularized_difference_ratio", rho_diff**2 / rmin_alpha**2, 32.0 * s.cond**2),
        ("shifted_gram_lower", s.rho_min + alpha, rmin_alpha),
        ("plain_event_rho_EtE", rho_EtE, s.rho_min / 4.0),
        ("plain_gram_lower", s.rho_min / 2.0, rmin_hat),
        ("plain_gram_difference", rho_diff, 2.0 * s.rho),
    ]
    return [InequalityCheck(name, float(lhs), float(rhs), _rel_leq(lhs, rhs)) for name, lhs, rhs in items]


def trace_trick(M: ArrayLike, N: ArrayLike) -> tuple[float, float]:
    """Return ``(Tr(M N), rho(M) Tr(N))`` for PSD ``M`` and ``N``."""
    Ms = check_symmetric(M, "M")
    Ns = check_symmetric(N, "N")
    if Ms.shape != Ns.shape:
        raise InvalidInputError("M and N must have the same shape")
    for name, X in (("M", Ms), ("N", Ns)):
        vals = np.linalg.eigvalsh(X)
        if vals[0] < -1e-10 * max(abs(vals[-1]), 1.0):
            raise InvalidInputError(f"{name} must be positive semidefinite")
    rho_M = max(float(np.linalg.eigvalsh(Ms)[-1]), 0.0)
    return float(np.sum(Ms * Ns)), rho_M * float(np.trace(Ns))
