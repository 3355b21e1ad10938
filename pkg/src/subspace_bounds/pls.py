"""Partial least squares as an instance of the shared-latent-vector noise model.

For a fixed design ``X`` (``n x p``) and response ``Y = X beta + eps`` with
``eps ~ N(0, tau2 I_n)``, PLS with ``K`` components projects onto
``span(X G_hat)``. Here ``G_hat`` is the Krylov matrix
``(s, Sigma s, ..., Sigma^{K-1} s)`` built from ``s = sigma_hat = X^T Y / n``.
Its population counterpart uses ``sigma = Sigma beta``.

Because ``sigma_hat - sigma = X^T eps / n ~ N(0, (tau2 / n) Sigma)``, the
column errors are ``X Sigma^{j-1} (sigma_hat - sigma)``. That is model 4
with ``A_j = X Sigma^{j-1}``, ``V = Sigma``, ``v = sigma`` and
``gamma2 = tau2 / n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .bounds import BoundReport, event_delta, regularized_bound, theoretical_bound
from .concentration import event_threshold
from .errors import (
    AssumptionViolatedError,
    DegenerateInputError,
    InvalidInputError,
    InvalidParameterError,
    NumericalFailure,
)
from .matrix_core import SubspaceBasis, as_matrix, check_symmetric
from .noise_scenarios import Scenario4, scenario4_error, trial_rng

__all__ = [
    "LinearModelInstance",
    "KrylovPair",
    "PLSDraw",
    "krylov_matrix",
    "krylov_pair",
    "krylov_trace_sum",
    "theta_matrix",
    "pls_noise_model",
    "pls_clean_basis",
    "simulate_pls_instance",
    "pls_error_via_scenario4",
    "pls_assumption",
    "pls_bound",
    "nipals_weights",
    "geometric_design",
]

FloatArray = NDArray[np.float64]

#: NIPALS stops when a weight vector norm falls below this.
NIPALS_BREAKDOWN = 1e-12


@dataclass(frozen=True, eq=False)
class LinearModelInstance:
    """Fixed design ``X``, coefficients ``beta`` and noise variance ``tau2``.

    ``Sigma = X^T X / n`` and ``sigma = Sigma beta`` are derived on construction.
    """

    X: FloatArray
    beta: FloatArray
    tau2: float

    def __post_init__(self) -> None:
        X = as_matrix(self.X, "X").copy()
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1).copy()
        if beta.shape[0] != X.shape[1] or not np.all(np.isfinite(beta)):
            raise InvalidInputError(f"beta must be finite with length {X.shape[1]}")
        tau2 = float(self.tau2)
        if not math.isfinite(tau2) or tau2 < 0:
            raise InvalidParameterError(f"tau2 must be finite and >= 0, got {self.tau2}")
        X.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "tau2", tau2)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def Sigma(self) -> FloatArray:
        S = self.X.T @ self.X / self.n
        return 0.5 * (S + S.T)

    @cached_property
    def sigma(self) -> FloatArray:
        return self.Sigma @ self.beta

    def with_tau2(self, tau2: float) -> "LinearModelInstance":
        return LinearModelInstance(self.X, self.beta, tau2)


def krylov_matrix(Sigma: ArrayLike, s: ArrayLike, K: int) -> FloatArray:
    """Columns ``s, Sigma s, ..., Sigma^{K-1} s`` by repeated multiplication.

    Warns when ``K > p``, since the rank cannot exceed ``p``.
    """
    S = as_matrix(Sigma, "Sigma")
    vec = np.asarray(s, dtype=np.float64).reshape(-1)
    p = S.shape[0]
    if S.shape != (p, p) or vec.shape[0] != p:
        raise InvalidInputError(f"Sigma must be p x p and s of length p, got {S.shape} and {vec.shape}")
    if K < 1:
        raise InvalidParameterError(f"K must be >= 1, got {K}")
    if not np.any(vec):
        raise DegenerateInputError("Krylov start vector is zero")
    if K > p:
        warnings.warn(f"K={K} exceeds p={p}; the Krylov matrix is rank deficient", stacklevel=2)
    G = np.empty((p, K))
    G[:, 0] = vec
    for j in range(1, K):
        G[:, j] = S @ G[:, j - 1]
    return G


def krylov_trace_sum(Sigma: ArrayLike, K: int) -> float:
    """``sum_{i=1}^K Tr(Sigma^{2i})`` by repeated multiplication."""
    S = check_symmetric(Sigma, "Sigma")
    S2 = S @ S
    power = S2
    total = float(np.trace(power))
    for _ in range(1, K):
        power = power @ S2
        total += float(np.trace(power))
    return total


def theta_matrix(inst: LinearModelInstance, G: ArrayLike) -> FloatArray:
    """``Theta = G^T X^T X G / n = G^T Sigma G``."""
    Gm = as_matrix(G, "G")
    XG = inst.X @ Gm
    T = XG.T @ XG / inst.n
    return 0.5 * (T + T.T)


class KrylovPair(NamedTuple):
    G: FloatArray
    G_hat: FloatArray
    Theta: FloatArray


def krylov_pair(inst: LinearModelInstance, sigma_hat: ArrayLike, K: int) -> KrylovPair:
    """Population and estimated Krylov matrices with ``Theta`` for the former."""
    G = krylov_matrix(inst.Sigma, inst.sigma, K)
    return KrylovPair(G, krylov_matrix(inst.Sigma, sigma_hat, K), theta_matrix(inst, G))


class PLSDraw(NamedTuple):
    H: FloatArray
    H_hat: FloatArray
    G: FloatArray
    G_hat: FloatArray
    eps: FloatArray
    sigma_hat: FloatArray


def pls_noise_model(inst: LinearModelInstance, K: int) -> Scenario4:
    """Model 4 with ``A_j = X Sigma^{j-1}``, ``V = Sigma``, ``v = sigma``, ``gamma2 = tau2 / n``."""
    A_list = []
    A = inst.X.copy()
    for _ in range(K):
        A_list.append(A)
        A = A @ inst.Sigma
    return Scenario4(inst.tau2 / inst.n, inst.Sigma, inst.sigma, tuple(A_list))


def pls_clean_basis(inst: LinearModelInstance, K: int) -> tuple[FloatArray, FloatArray]:
    """Population Krylov matrix ``G`` and the clean basis ``H = X G``."""
    G = krylov_matrix(inst.Sigma, inst.sigma, K)
    return G, inst.X @ G


def simulate_pls_instance(inst: LinearModelInstance, K: int, seed: int, trial_index: int = 0) -> PLSDraw:
    """One regression draw and the resulting clean and estimated Krylov bases.

    Raises
    ------
    RankDeficiencyError
        If ``X G`` does not have full column rank.
    """
    G, H = pls_clean_basis(inst, K)
    SubspaceBasis.from_matrix(H)
    rng = trial_rng(seed, trial_index)
    eps = math.sqrt(inst.tau2) * rng.standard_normal(inst.n)
    Y = inst.X @ inst.beta + eps
    sigma_hat = inst.X.T @ Y / inst.n
    G_hat = krylov_matrix(inst.Sigma, sigma_hat, K) if np.any(sigma_hat) else np.zeros_like(G)
    return PLSDraw(H, inst.X @ G_hat, G, G_hat, eps, sigma_hat)


def pls_error_via_scenario4(inst: LinearModelInstance, K: int, eps: ArrayLike, model: Scenario4 | None = None) -> FloatArray:
    """Noise matrix for a given ``eps`` computed through the model-4 maps."""
    model = pls_noise_model(inst, K) if model is None else model
    v_hat = inst.sigma + inst.X.T @ np.asarray(eps, dtype=np.float64) / inst.n
    return scenario4_error(model, v_hat)


def pls_assumption(
    Theta: ArrayLike, Sigma: ArrayLike, tau2: float, n: int, K: int, delta: float
) -> tuple[bool, float]:
    """Test ``rho_min(Theta) / 4 > d (tau2 / n) sum_i Tr(Sigma^{2i})`` (strict).

    Returns ``(holds, margin)`` with ``margin = lhs - rhs``.
    """
    T = check_symmetric(Theta, "Theta")
    if T.shape != (K, K):
        raise InvalidInputError(f"Theta must be {K}x{K}")
    d = event_threshold(4, delta, K).d_value
    lhs = float(np.linalg.eigvalsh(T)[0]) / 4.0
    rhs = d * (float(tau2) / n) * krylov_trace_sum(Sigma, K)
    return bool(lhs > rhs), lhs - rhs


def pls_bound(
    inst: LinearModelInstance,
    K: int,
    delta: float,
    regularized: bool = False,
    detail: str = "detailed",
) -> BoundReport:
    """Bound on ``|||P_[X G] - P_[X G_hat]|||^2 / n`` (or its ridge analogue).

    Delegates to the generic model-4 bound, so the value is identical to
    ``theoretical_bound(4, X G, pls_noise_model(inst, K), delta)``. As there,
    the assumption is checked with the event constant at ``delta / 2``.
    """
    G, H = pls_clean_basis(inst, K)
    model = pls_noise_model(inst, K)
    if regularized:
        return regularized_bound(4, H, model, delta, detail)
    holds, margin = pls_assumption(theta_matrix(inst, G), inst.Sigma, inst.tau2, inst.n, K, event_delta(delta))
    if not holds:
        raise AssumptionViolatedError(f"PLS assumption fails (margin {margin:.6g})")
    return theoretical_bound(4, H, model, delta, detail)


def nipals_weights(X: ArrayLike, Y: ArrayLike, K: int) -> FloatArray:
    """PLS1 weight vectors by NIPALS with deflation of ``X``.

    No centering is applied. Each weight is ``X_k^T Y`` normalized, where
    ``X_k`` is the deflated design; the returned columns are orthonormal.

    Raises
    ------
    NumericalFailure
        If a weight vector norm falls below 1e-12 before ``K`` components.
    """
    Xk = as_matrix(X, "X").copy()
    y = np.asarray(Y, dtype=np.float64).reshape(-1)
    if y.shape[0] != Xk.shape[0]:
        raise InvalidInputError("Y must have one entry per row of X")
    if K < 1:
        raise InvalidParameterError(f"K must be >= 1, got {K}")
    W = np.empty((Xk.shape[1], K))
    for k in range(K):
        w = Xk.T @ y
        norm = float(np.linalg.norm(w))
        if norm < NIPALS_BREAKDOWN:
            raise NumericalFailure(f"NIPALS broke down at component {k + 1} (weight norm {norm:.3e})")
        w /= norm
        t = Xk @ w
        loading = Xk.T @ t / float(t @ t)
        Xk -= np.outer(t, loading)
        W[:, k] = w
    return W


def geometric_design(n: int, p: int, ratio: float, seed: int, top: float = 1.0) -> FloatArray:
    """Design ``X`` whose ``Sigma = X^T X / n`` has eigenvalues ``top * ratio**k``.

    ``X = sqrt(n) U diag(sqrt(lambda)) W^T`` with ``U`` (``n x p``) and ``W``
    (``p x p``) Haar-random orthonormal factors.
    """
    if p > n:
        raise InvalidParameterError("geometric_design needs p <= n")
    if not (0 < ratio <= 1) or top <= 0:
        raise InvalidParameterError("need 0 < ratio <= 1 and top > 0")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    U, _ = np.linalg.qr(rng.standard_normal((n, p)))
    W, _ = np.linalg.qr(rng.standard_normal((p, p)))
    lam = top * ratio ** np.arange(p)
    return math.sqrt(n) * (U * np.sqrt(lam)) @ W.T
