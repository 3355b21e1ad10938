from __future__ import annotations

import json
import math

import numpy as np
import pytest

from conftest import random_basis
from subspace_bounds.bounds import (
    PLAIN_COEFFICIENTS,
    PLAIN_FACTOR,
    REGULARIZED_FACTOR,
    SkeletonTerms,
    bound_assumption,
    check_assumption_e1,
    choose_alpha,
    eigen_control_checks,
    event_delta,
    regularized_bound,
    regularized_skeleton_combine,
    skeleton_combine,
    skeleton_terms,
    term_ii_decomposition,
    theoretical_bound,
    trace_trick,
)
from subspace_bounds.concentration import event_threshold, g
from subspace_bounds.errors import AssumptionViolatedError, InvalidInputError, InvalidParameterError
from subspace_bounds.matrix_core import SpectralSummary, SubspaceBasis, projector, regularized_projector
from subspace_bounds.noise_scenarios import Scenario1, Scenario2, Scenario3, Scenario4, noise_psi, sample_noise

DELTA = 0.05


def orthogonal_design(rng, n, K, scale):
    Q, _ = np.linalg.qr(rng.standard_normal((n, K)))
    return math.sqrt(scale) * Q


def calibrated_gamma2(H, unit_model, delta, ratio):
    """Noise level at which E.1 (as used by the bound) holds with ``ratio`` to spare."""
    n, K = H.shape
    d = event_threshold(unit_model.scenario, event_delta(delta), K).d_value
    rho_min = np.linalg.eigvalsh(H.T @ H)[0]
    return rho_min / (4 * ratio * d * noise_psi(unit_model, n, K))


def ar1(m, r):
    idx = np.arange(m)
    return r ** np.abs(idx[:, None] - idx[None, :])


def shift_matrices(n, K):
    """Cyclic shifts: ``Tr(A_j A_j^T) = n`` and distinct columns ``A_j v``."""
    return tuple(np.roll(np.eye(n), j, axis=0) for j in range(K))


def instance(rng, scenario, n=40, K=3, ratio=2.0, cond=3.0):
    """(H, model) pair satisfying the bound's E.1 with the given ratio."""
    if scenario == 4:
        v = rng.standard_normal(n)
        unit = Scenario4(1.0, np.eye(n), v, shift_matrices(n, K))
        H = unit.clean_basis
        g2 = calibrated_gamma2(H, unit, DELTA, ratio)
        return H, Scenario4(g2, unit.V, unit.v, unit.A_list)
    H = random_basis(rng, n, K, cond) * 3.0
    unit = {1: Scenario1(1.0), 2: Scenario2(1.0, ar1(K, 0.5)), 3: Scenario3(1.0, ar1(n, 0.5))}[scenario]
    g2 = calibrated_gamma2(H, unit, DELTA, ratio)
    model = {1: lambda: Scenario1(g2), 2: lambda: Scenario2(g2, unit.S), 3: lambda: Scenario3(g2, unit.A)}[scenario]()
    return H, model


def with_gamma2(model, g2):
    if isinstance(model, Scenario1):
        return Scenario1(g2)
    if isinstance(model, Scenario2):
        return Scenario2(g2, model.S)
    if isinstance(model, Scenario3):
        return Scenario3(g2, model.A)
    return Scenario4(g2, model.V, model.v, model.A_list)


# --- assumption E.1 -------------------------------------------------------------------


def test_e1_noiseless(rng):
    H = random_basis(rng, 10, 3)
    check = check_assumption_e1(H, Scenario1(0.0), DELTA)
    assert check.holds
    assert check.margin == pytest.approx(np.linalg.eigvalsh(H.T @ H)[0] / 4, rel=1e-12)


def test_e1_homogeneity(rng):
    H = random_basis(rng, 20, 3)
    model = Scenario2(0.01, ar1(3, 0.3))
    base = check_assumption_e1(H, model, DELTA)
    rhs = event_threshold(2, DELTA, 3).d_value * noise_psi(model, 20, 3)
    for c in (0.5, 2.0, 7.0):
        scaled = check_assumption_e1(math.sqrt(c) * H, model, DELTA)
        assert scaled.margin + rhs == pytest.approx(c * (base.margin + rhs), rel=1e-10)


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
def test_e1_boundary_flips(rng, scenario):
    H, model = instance(rng, scenario, ratio=1.0)
    # the calibration makes the margin zero at event_delta(DELTA)
    g2 = model.gamma2
    assert abs(check_assumption_e1(H, model, event_delta(DELTA)).margin) < 1e-10 * np.linalg.eigvalsh(H.T @ H)[0]
    assert check_assumption_e1(H, with_gamma2(model, 0.9 * g2), event_delta(DELTA)).holds
    assert not check_assumption_e1(H, with_gamma2(model, 1.1 * g2), event_delta(DELTA)).holds


def test_e1_tie_is_failure(monkeypatch):
    import subspace_bounds.bounds as bounds_module
    from subspace_bounds.concentration import EventThreshold

    monkeypatch.setattr(bounds_module, "event_threshold", lambda s, dl, K: EventThreshold(s, dl, K, 1.0, "spectral"))
    # rho_min / 4 = 1 and d * psi = 1 * (1/4) * 4 = 1 exactly
    H = 2.0 * np.eye(4)[:, :1]
    check = check_assumption_e1(H, Scenario1(0.25), DELTA)
    assert check.margin == 0.0
    assert not check.holds


def test_bound_assumption_uses_half_delta(rng):
    H, model = instance(rng, 2)
    assert bound_assumption(H, model, DELTA) == check_assumption_e1(H, model, DELTA / 2)


# --- plain bound ------------------------------------------------------------------------


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
@pytest.mark.parametrize("detail", ["detailed", "simplified"])
def test_noiseless_bound_is_zero(rng, scenario, detail):
    H, model = instance(rng, scenario)
    report = theoretical_bound(scenario, H, with_gamma2(model, 0.0), DELTA, detail)
    assert report.bound_value == 0.0
    assert report.assumption_holds


def test_violated_assumption_raises(rng):
    H, model = instance(rng, 2, ratio=0.5)
    with pytest.raises(AssumptionViolatedError):
        theoretical_bound(2, H, model, DELTA)


def test_scenario_mismatch_rejected(rng):
    H, model = instance(rng, 2)
    with pytest.raises(InvalidParameterError):
        theoretical_bound(1, H, model, DELTA)
    with pytest.raises(InvalidParameterError):
        theoretical_bound(2, H, model, DELTA, "rough")


@pytest.mark.parametrize("detail", ["detailed", "simplified"])
def test_scenario1_equals_scenario2_with_identity(rng, detail):
    H = random_basis(rng, 30, 4, cond=5.0) * 4
    g2 = 1e-3
    a = theoretical_bound(1, H, Scenario1(g2), DELTA, detail)
    b = theoretical_bound(2, H, Scenario2(g2, np.eye(4)), DELTA, detail)
    assert a.bound_value == b.bound_value
    a = regularized_bound(1, H, Scenario1(g2), DELTA, detail)
    b = regularized_bound(2, H, Scenario2(g2, np.eye(4)), DELTA, detail)
    assert a.bound_value == b.bound_value


def test_orthogonal_design_collapses_conditioning(rng):
    n, K, g2 = 50, 3, 1e-5
    S = np.diag([2.0, 1.0, 0.5])
    values = []
    for c in (2.0, 5.0, 11.0):
        H = orthogonal_design(rng, n, K, c)
        report = theoretical_bound(2, H, Scenario2(g2, S), DELTA, "simplified")
        assert report.constant("cond") == pytest.approx(1.0, abs=1e-12)
        values.append(report.bound_value / (g2 * 2.0 / c))
    C = g(math.log(2 / DELTA))
    for v in values:
        assert v == pytest.approx(PLAIN_FACTOR * C, rel=1e-10)


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
@pytest.mark.parametrize("detail", ["detailed", "simplified"])
def test_bound_nondecreasing_in_gamma2(rng, scenario, detail):
    H, model = instance(rng, scenario, ratio=4.0)
    vals = [theoretical_bound(scenario, H, with_gamma2(model, f * model.gamma2), DELTA, detail).bound_value for f in (0.1, 0.3, 0.6, 1.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
def test_detailed_bound_nonincreasing_in_delta(rng, scenario):
    H, model = instance(rng, scenario, ratio=4.0)
    deltas = [0.01, 0.05, 0.1, 0.3, 0.6, 0.9]
    vals = [theoretical_bound(scenario, H, model, d).bound_value for d in deltas]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
def test_simplified_bound_nonincreasing_in_small_delta(rng, scenario):
    H, model = instance(rng, scenario, ratio=4.0)
    deltas = [0.001, 0.01, 0.05, 0.1, 0.2]
    vals = [theoretical_bound(scenario, H, model, d, "simplified").bound_value for d in deltas]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
@pytest.mark.parametrize("cond", [1.0, 3.0, 20.0])
def test_detailed_never_exceeds_simplified(rng, scenario, cond):
    H, model = instance(rng, scenario, ratio=2.0, cond=cond)
    for regularized in (False, True):
        fn = regularized_bound if regularized else theoretical_bound
        detailed = fn(scenario, H, model, DELTA, "detailed").bound_value
        simplified = fn(scenario, H, model, DELTA, "simplified").bound_value
        assert detailed <= simplified * (1 + 1e-12)


def test_report_fields_and_serialization(rng):
    H, model = instance(rng, 3)
    report = theoretical_bound(3, H, model, DELTA)
    assert report.alpha == 0.0
    assert report.bound_value >= 0
    assert report.assumption_holds == (report.assumption_margin > 0)
    assert report.dist_bound == pytest.approx(math.sqrt(report.bound_value))
    assert report.constant("delta_event") == DELTA / 2
    assert report.constant("detailed_value") == report.bound_value
    json.dumps(report.to_dict())
    with pytest.raises(KeyError):
        report.constant("missing")


def test_square_basis_is_degenerate_but_evaluated():
    n = 3
    H = 10.0 * np.eye(n)
    report = theoretical_bound(1, H, Scenario1(1e-3), DELTA)
    assert math.isfinite(report.bound_value) and report.bound_value > 0
    E = sample_noise(Scenario1(1e-3), n, n, seed=1)
    assert np.abs(projector(H) - projector(H + E)).max() < 1e-12


# --- skeleton -------------------------------------------------------------------------


def test_skeleton_zero_noise(rng):
    H = random_basis(rng, 8, 2)
    u = rng.standard_normal(8)
    u /= np.linalg.norm(u)
    t = skeleton_terms(H, np.zeros((8, 2)), u)
    assert (t.term_I, t.term_II, t.term_III) == (0.0, 0.0, 0.0)
    np.testing.assert_array_equal(t.u, u)


def test_skeleton_u_orthogonal_to_span(rng):
    n, K = 8, 2
    H = random_basis(rng, n, K)
    Q, _ = np.linalg.qr(np.column_stack([H, rng.standard_normal(n)]))
    u = Q[:, -1]
    E = 0.1 * rng.standard_normal((n, K))
    t = skeleton_terms(H, E, u)
    assert t.term_I < 1e-28 and t.term_II < 1e-28
    w = E.T @ u
    expected = np.linalg.norm(H @ np.linalg.solve(H.T @ H, w)) ** 2
    assert t.term_III == pytest.approx(expected, rel=1e-10)
    assert t.term_III > 0


def test_skeleton_rejects_non_unit_u(rng):
    H = random_basis(rng, 5, 2)
    with pytest.raises(InvalidInputError):
        skeleton_terms(H, np.zeros((5, 2)), np.ones(5))


def test_skeleton_combine_cond_one():
    gram = SpectralSummary.from_eigenvalues([2.0, 2.0])
    terms = SkeletonTerms(1.0, 2.0, 3.0)
    assert skeleton_combine(terms, gram) == pytest.approx(16 + 48 * 2.0 / 2.0 + 197 * 3.0)
    assert skeleton_combine(SkeletonTerms(0.0, 0.0, 0.0), gram) == 0.0


def test_regularized_skeleton_combine_cond_one():
    gram = SpectralSummary.from_eigenvalues([1.0, 1.0, 1.0])
    terms = SkeletonTerms(1.0, 2.0, 3.0)
    assert regularized_skeleton_combine(terms, gram, 4.0) == pytest.approx(16 + 72 * 2.0 / 4.0 + 393 * 3.0)
    assert regularized_skeleton_combine(SkeletonTerms(0.0, 0.0, 0.0), gram, 1.0) == 0.0
    with pytest.raises(InvalidParameterError):
        regularized_skeleton_combine(terms, gram, 0.0)


def test_plain_coefficients():
    assert PLAIN_COEFFICIENTS == (16.0, 16.0, 32.0, 5.0, 64.0, 128.0)
    assert (PLAIN_FACTOR, REGULARIZED_FACTOR) == (621.0, 1633.0)


def test_term_ii_decomposition(rng):
    for _ in range(50):
        n, K = 12, 3
        H = random_basis(rng, n, K)
        E = 0.3 * rng.standard_normal((n, K))
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        lhs, rhs = term_ii_decomposition(H, E, u)
        assert lhs <= rhs * (1 + 1e-12)
        assert lhs == pytest.approx(skeleton_terms(H, E, u).term_II, rel=1e-10)


def top_direction(D):
    U, s, _ = np.linalg.svd(D)
    return U[:, 0], s[0]


def test_skeleton_soundness_plain(rng):
    n, K = 60, 3
    H, model = instance(rng, 2, n=n, K=K, ratio=1.2, cond=4.0)
    basis = SubspaceBasis.from_matrix(H)
    level = event_threshold(2, DELTA, K).d_value * noise_psi(model, n, K)
    P = projector(H)
    checked = 0
    for t in range(200):
        E = sample_noise(model, n, K, seed=51, trial_index=t)
        if np.linalg.eigvalsh(E.T @ E)[-1] > level:
            continue
        u, s = top_direction(P - projector(H + E))
        combo = skeleton_combine(skeleton_terms(basis, E, u), basis.gram_summary)
        assert s**2 <= combo + 1e-9
        checked += 1
    assert checked > 150


def test_skeleton_soundness_regularized(rng):
    n, K = 60, 3
    H, model = instance(rng, 1, n=n, K=K, ratio=0.1, cond=4.0)
    basis = SubspaceBasis.from_matrix(H)
    alpha = choose_alpha(1, model, DELTA, n, K)
    P_alpha = regularized_projector(H, alpha)
    checked = 0
    for t in range(200):
        E = sample_noise(model, n, K, seed=52, trial_index=t)
        if float(np.sum(E * E)) > alpha / 2:
            continue
        H_hat = H + E
        u, s = top_direction(P_alpha - regularized_projector(H_hat, alpha))
        terms = skeleton_terms(basis, E, u, alpha)
        rmin = np.linalg.eigvalsh(H_hat.T @ H_hat + alpha * np.eye(K))[0]
        assert s**2 <= regularized_skeleton_combine(terms, basis.gram_summary, rmin) + 1e-9
        checked += 1
    assert checked > 150


# --- regularization -----------------------------------------------------------------------


def test_choose_alpha_examples():
    n, K = 100, 3
    model = Scenario4(0.01, np.eye(n), np.arange(1.0, n + 1), shift_matrices(n, K))
    expected = 2 * g(math.log(3 / 0.05)) * 0.01 * 300
    assert choose_alpha(4, model, 0.05, n, K) == pytest.approx(expected, rel=1e-12)
    S = ar1(3, 0.4)
    a1 = choose_alpha(2, Scenario2(0.02, S), 0.05, 40, 3)
    a2 = choose_alpha(2, Scenario2(0.02, 2 * S), 0.05, 40, 3)
    assert a2 == pytest.approx(2 * a1, rel=1e-12)
    assert choose_alpha(1, Scenario1(0.0), 0.05, 40, 3) == 0.0


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
def test_regularized_noiseless(rng, scenario):
    H, model = instance(rng, scenario)
    report = regularized_bound(scenario, H, with_gamma2(model, 0.0), DELTA)
    assert report.alpha == 0.0
    assert report.bound_value == 0.0


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
def test_regularized_needs_no_assumption(rng, scenario):
    H, model = instance(rng, scenario, ratio=0.25)
    report = regularized_bound(scenario, H, model, DELTA)
    assert not report.assumption_holds
    assert report.bound_value > 0
    assert report.alpha == pytest.approx(choose_alpha(scenario, model, DELTA / 2, *H.shape), rel=1e-14)
    assert report.constant("composition_factor") == 2.0


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
def test_regularized_to_plain_ratio_is_finite(rng, scenario):
    H, model = instance(rng, scenario, ratio=2.0)
    plain = theoretical_bound(scenario, H, model, DELTA, "simplified").bound_value
    ridge = regularized_bound(scenario, H, model, DELTA, "simplified").bound_value
    ratio = ridge / plain
    assert math.isfinite(ratio) and ratio > 1


def test_regularization_bias(rng):
    for _ in range(20):
        n, K = 15, 3
        H = random_basis(rng, n, K, cond=10.0)
        rho_min = np.linalg.eigvalsh(H.T @ H)[0]
        P = projector(H)
        for alpha in (1e-4, 1e-2, 0.3, 1.0, 10.0):
            bias = np.linalg.norm(regularized_projector(H, alpha) - P, 2) ** 2
            assert bias <= alpha / rho_min


# --- eigen control and trace trick ----------------------------------------------------------


def test_eigen_control_zero_noise(rng):
    H = random_basis(rng, 10, 3)
    assert all(c.holds for c in eigen_control_checks(H, np.zeros((10, 3)), 0.0))


def test_shifted_gram_lemma_unconditional(rng):
    for _ in range(100):
        n, K = int(rng.integers(4, 15)), int(rng.integers(1, 4))
        H = random_basis(rng, n, K, cond=float(rng.uniform(1, 50)))
        E = rng.standard_normal((n, K))
        checks = {c.name: c for c in eigen_control_checks(H, E, float(rng.exponential(2.0)))}
        assert checks["shifted_gram_lower"].holds


def test_eigen_control_inside_event(rng):
    n, K = 50, 3
    H, model = instance(rng, 1, n=n, K=K, ratio=0.1)
    alpha = choose_alpha(1, model, DELTA, n, K)
    level = alpha / 2
    names = ("regularized_event_rho_EtE", "regularized_gram_lower", "regularized_gram_difference", "regularized_difference_ratio")
    inside = 0
    for t in range(1000):
        E = sample_noise(model, n, K, seed=53, trial_index=t)
        if float(np.sum(E * E)) > level:
            continue
        inside += 1
        checks = {c.name: c for c in eigen_control_checks(H, E, alpha)}
        assert all(checks[name].holds for name in names)
    assert inside > 900


def test_plain_eigen_control_under_e1(rng):
    n, K = 50, 3
    H, model = instance(rng, 2, n=n, K=K, ratio=1.5)
    level = event_threshold(2, DELTA, K).d_value * noise_psi(model, n, K)
    for t in range(300):
        E = sample_noise(model, n, K, seed=54, trial_index=t)
        if np.linalg.eigvalsh(E.T @ E)[-1] > level:
            continue
        checks = {c.name: c for c in eigen_control_checks(H, E, 0.0)}
        assert all(checks[name].holds for name in ("plain_event_rho_EtE", "plain_gram_lower", "plain_gram_difference"))


def test_trace_trick_cases(rng):
    N = np.diag([1.0, 2.0, 3.0])
    lhs, rhs = trace_trick(np.eye(3), N)
    assert lhs == pytest.approx(rhs)
    assert trace_trick(np.zeros((3, 3)), N) == (0.0, 0.0)
    for _ in range(100):
        B1, B2 = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
        lhs, rhs = trace_trick(B1.T @ B1, B2.T @ B2)
        assert lhs <= rhs
    with pytest.raises(InvalidInputError):
        trace_trick(-np.eye(2), np.eye(2))
