"""The four Gaussian noise models and their seeded samplers.

====== ==================================== ==============================
Model  Noise matrix ``E`` (n x K)           Scale ``psi``
====== ==================================== ==============================
1      ``gamma * Z``                        ``gamma2 * n``
2      ``gamma * Z S^{1/2}``                ``gamma2 * n * rho(S)``
3      ``gamma * A^{1/2} Z``                ``gamma2 * n * rho(A)``
4      ``E_j = A_j (v_hat - v)``            ``gamma2 * sum_j Tr(A_j V A_j^T)``
====== ==================================== ==============================

``Z`` has i.i.d. standard normal entries and in model 4
``v_hat = v + gamma * V^{1/2} z`` with ``z`` standard normal. Model 4 lets
each ``A_j`` be rectangular (``n x m``) so that the latent vector may live in
a different dimension from the columns.

Every draw is a pure function of ``(seed, trial_index)``: the generator is a
Philox counter-based stream keyed by ``SeedSequence(seed, spawn_key=(trial,))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, NamedTuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DegenerateInputError, InvalidInputError, InvalidParameterError, RankDeficiencyError
from .matrix_core import as_matrix, check_symmetric, gram_summary, is_full_rank

__all__ = [
    "PSD_RTOL",
    "SQRT_CLAMP",
    "Scenario1",
    "Scenario2",
    "Scenario3",
    "Scenario4",
    "NoiseModel",
    "Scenario4Draw",
    "psd_sqrt",
    "trial_rng",
    "sample_noise",
    "sample_scenario4",
    "scenario4_column_covariances",
    "scenario4_cross_covariance",
    "scenario4_error",
    "noise_psi",
    "model_to_dict",
    "model_from_dict",
]

#: Minimum eigenvalue allowed for a covariance, relative to its largest.
PSD_RTOL = 1e-10
#: Eigenvalues below this are set to zero when taking a square root.
SQRT_CLAMP = 1e-12

FloatArray = NDArray[np.float64]


def _check_gamma2(gamma2: float) -> float:
    g = float(gamma2)
    if not np.isfinite(g) or g < 0:
        raise InvalidParameterError(f"gamma2 must be finite and >= 0, got {gamma2}")
    return g


def _check_psd(M: ArrayLike, name: str) -> FloatArray:
    sym = check_symmetric(M, name)
    vals = np.linalg.eigvalsh(sym)
    top = max(float(vals[-1]), 0.0)
    if vals[0] < -PSD_RTOL * max(top, 1.0):
        raise InvalidInputError(f"{name} is not positive semidefinite (min eigenvalue {vals[0]:.3e})")
    sym.setflags(write=False)
    return sym


def psd_sqrt(M: ArrayLike) -> FloatArray:
    """Symmetric square root of a PSD matrix via ``eigh``.

    Eigenvalues below :data:`SQRT_CLAMP` (including round-off negatives) are
    clamped to zero.
    """
    sym = check_symmetric(M, "covariance")
    vals, vecs = np.linalg.eigh(sym)
    vals = np.where(vals < SQRT_CLAMP, 0.0, vals)
    R = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (R + R.T)


def _rho(M: FloatArray) -> float:
    return float(np.linalg.eigvalsh(M)[-1])


@dataclass(frozen=True, eq=False)
class Scenario1:
    """I.i.d. isotropic noise with variance ``gamma2``."""

    gamma2: float
    scenario: int = field(default=1, init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma2", _check_gamma2(self.gamma2))


@dataclass(frozen=True, eq=False)
class Scenario2:
    """Rows i.i.d. ``N(0, gamma2 * S)`` with ``S`` a ``K x K`` covariance."""

    gamma2: float
    S: FloatArray
    scenario: int = field(default=2, init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma2", _check_gamma2(self.gamma2))
        object.__setattr__(self, "S", _check_psd(self.S, "S"))

    @cached_property
    def sqrt_S(self) -> FloatArray:
        return psd_sqrt(self.S)

    @cached_property
    def rho_S(self) -> float:
        return _rho(self.S)


@dataclass(frozen=True, eq=False)
class Scenario3:
    """Columns i.i.d. ``N(0, gamma2 * A)`` with ``A`` an ``n x n`` covariance."""

    gamma2: float
    A: FloatArray
    scenario: int = field(default=3, init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma2", _check_gamma2(self.gamma2))
        object.__setattr__(self, "A", _check_psd(self.A, "A"))

    @cached_property
    def sqrt_A(self) -> FloatArray:
        return psd_sqrt(self.A)

    @cached_property
    def rho_A(self) -> float:
        return _rho(self.A)


@dataclass(frozen=True, eq=False)
class Scenario4:
    """Columns share one latent Gaussian perturbation.

    Parameters
    ----------
    gamma2 : float
        Noise level.
    V : array_like, shape (m, m)
        Covariance of the latent perturbation.
    v : array_like, shape (m,)
        Nonzero latent vector.
    A_list : sequence of K arrays, each (n, m)
        Column maps; the clean basis is ``H[:, j] = A_j v``.
    """

    gamma2: float
    V: FloatArray
    v: FloatArray
    A_list: tuple[FloatArray, ...]
    scenario: int = field(default=4, init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma2", _check_gamma2(self.gamma2))
        V = _check_psd(self.V, "V")
        v = np.asarray(self.v, dtype=np.float64).reshape(-1).copy()
        if v.shape[0] != V.shape[0] or not np.all(np.isfinite(v)):
            raise InvalidInputError(f"v must be finite with length {V.shape[0]}")
        if not np.any(v):
            raise DegenerateInputError("v must be nonzero")
        mats = tuple(as_matrix(A, f"A_{j + 1}").copy() for j, A in enumerate(self.A_list))
        if not mats:
            raise InvalidInputError("A_list must contain at least one matrix")
        shape = mats[0].shape
        if shape[1] != V.shape[0] or any(A.shape != shape for A in mats):
            raise InvalidInputError(f"every A_j must have shape (n, {V.shape[0]})")
        n = shape[0]
        if len(mats) > n:
            raise InvalidInputError(f"K={len(mats)} columns cannot span a subspace of R^{n}")
        H = np.column_stack([A @ v for A in mats])
        if not is_full_rank(gram_summary(H), n, len(mats)):
            raise RankDeficiencyError("the columns A_j v do not span a K-dimensional subspace")
        for A in mats:
            A.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "A_list", mats)

    @property
    def n(self) -> int:
        return self.A_list[0].shape[0]

    @property
    def K(self) -> int:
        return len(self.A_list)

    @cached_property
    def sqrt_V(self) -> FloatArray:
        return psd_sqrt(self.V)

    @cached_property
    def stacked(self) -> FloatArray:
        """All ``A_j`` stacked as a ``(K, n, m)`` array."""
        return np.stack(self.A_list)

    @cached_property
    def clean_basis(self) -> FloatArray:
        """``H`` with columns ``A_j v``."""
        return np.einsum("knm,m->nk", self.stacked, self.v)

    @cached_property
    def column_traces(self) -> FloatArray:
        """``Tr(A_j V A_j^T)`` for each column ``j``."""
        return np.einsum("knm,ml,knl->k", self.stacked, self.V, self.stacked)

    @cached_property
    def trace_sum(self) -> float:
        return float(self.column_traces.sum())


def scenario4_cross_covariance(model: Scenario4, j: int, l: int) -> FloatArray:
    """``Cov(E_j, E_l) = gamma2 A_j V A_l^T`` (0-based column indices)."""
    return model.gamma2 * (model.A_list[j] @ model.V @ model.A_list[l].T)


def scenario4_column_covariances(model: Scenario4) -> list[FloatArray]:
    """``gamma2 A_j V A_j^T`` for each column, symmetrized."""
    out = []
    for j in range(model.K):
        C = scenario4_cross_covariance(model, j, j)
        out.append(0.5 * (C + C.T))
    return out


NoiseModel = Union[Scenario1, Scenario2, Scenario3, Scenario4]


def noise_psi(model: NoiseModel, n: int, K: int) -> float:
    """Scale ``psi`` at which the event thresholds are expressed."""
    _check_dims(model, n, K)
    if isinstance(model, Scenario1):
        return model.gamma2 * n
    if isinstance(model, Scenario2):
        return model.gamma2 * n * model.rho_S
    if isinstance(model, Scenario3):
        return model.gamma2 * n * model.rho_A
    return model.gamma2 * model.trace_sum


def _check_dims(model: NoiseModel, n: int, K: int) -> None:
    if n < 1 or K < 1:
        raise InvalidParameterError(f"need n, K >= 1, got n={n}, K={K}")
    if isinstance(model, Scenario2) and model.S.shape[0] != K:
        raise InvalidInputError(f"S is {model.S.shape[0]}x{model.S.shape[0]} but K={K}")
    if isinstance(model, Scenario3) and model.A.shape[0] != n:
        raise InvalidInputError(f"A is {model.A.shape[0]}x{model.A.shape[0]} but n={n}")
    if isinstance(model, Scenario4) and (model.n, model.K) != (n, K):
        raise InvalidInputError(f"model has (n, K)=({model.n}, {model.K}), expected ({n}, {K})")


def trial_rng(seed: int, trial_index: int = 0) -> np.random.Generator:
    """Independent generator for one trial of one experiment."""
    if int(seed) < 0 or int(trial_index) < 0:
        raise InvalidParameterError("seed and trial_index must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial_index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_noise(model: NoiseModel, n: int, K: int, seed: int, trial_index: int = 0) -> FloatArray:
    """Draw the noise matrix ``E`` (``n x K``) for one trial.

    The same ``(model, n, K, seed, trial_index)`` always gives the same array.
    """
    _check_dims(model, n, K)
    if isinstance(model, Scenario4):
        return sample_scenario4(model, seed, trial_index).E
    rng = trial_rng(seed, trial_index)
    gamma = np.sqrt(model.gamma2)
    Z = rng.standard_normal((n, K))
    if isinstance(model, Scenario1):
        return gamma * Z
    if isinstance(model, Scenario2):
        return gamma * (Z @ model.sqrt_S)
    return gamma * (model.sqrt_A @ Z)


class Scenario4Draw(NamedTuple):
    E: FloatArray
    v_hat: FloatArray


def scenario4_error(model: Scenario4, v_hat: ArrayLike) -> FloatArray:
    """Columns ``A_j (v_hat - v)`` for an arbitrary estimate ``v_hat``."""
    diff = np.asarray(v_hat, dtype=np.float64).reshape(-1) - model.v
    return np.einsum("knm,m->nk", model.stacked, diff)


def sample_scenario4(model: Scenario4, seed: int, trial_index: int = 0) -> Scenario4Draw:
    """Draw ``v_hat`` and the induced noise matrix for model 4."""
    rng = trial_rng(seed, trial_index)
    z = rng.standard_normal(model.v.shape[0])
    v_hat = model.v + np.sqrt(model.gamma2) * (model.sqrt_V @ z)
    return Scenario4Draw(scenario4_error(model, v_hat), v_hat)


def model_to_dict(model: NoiseModel) -> dict[str, Any]:
    """Serialize to the ``noise`` block of the experiment config schema."""
    out: dict[str, Any] = {"scenario": model.scenario, "gamma2": model.gamma2}
    if isinstance(model, Scenario2):
        out["S"] = model.S.tolist()
    elif isinstance(model, Scenario3):
        out["A"] = model.A.tolist()
    elif isinstance(model, Scenario4):
        out["V"] = model.V.tolist()
        out["v"] = model.v.tolist()
        out["A_list"] = [A.tolist() for A in model.A_list]
    return out


def model_from_dict(doc: dict[str, Any]) -> NoiseModel:
    """Inverse of :func:`model_to_dict` for inline matrices."""
    try:
        scenario = int(doc["scenario"])
        gamma2 = doc["gamma2"]
        if scenario == 1:
            return Scenario1(gamma2)
        if scenario == 2:
            return Scenario2(gamma2, np.asarray(doc["S"], dtype=float))
        if scenario == 3:
            return Scenario3(gamma2, np.asarray(doc["A"], dtype=float))
        if scenario == 4:
            return Scenario4(
                gamma2,
                np.asarray(doc["V"], dtype=float),
                np.asarray(doc["v"], dtype=float),
                tuple(np.asarray(A, dtype=float) for A in doc["A_list"]),
            )
    except KeyError as exc:
        raise InvalidInputError(f"noise block is missing field {exc}") from None
    raise InvalidParameterError(f"unknown scenario {doc.get('scenario')!r}")
