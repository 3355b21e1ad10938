"""Deviation inequalities and the event thresholds built from them.

All constants are closed-form functions of the failure probability
``delta``. The helper ``g(x) = 1 + 2x + 2 sqrt(x)`` recurs: it bounds a
chi-square-type quadratic form ``z^T U z`` by ``g(x) Tr(U)`` with
probability at least ``1 - exp(-x)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .errors import InvalidInputError, InvalidParameterError
from .matrix_core import check_symmetric

__all__ = [
    "g",
    "DeviationConstants",
    "deviation_constants",
    "rows_constant",
    "laurent_massart_bound",
    "SingularValueBounds",
    "vershynin_singular_bounds",
    "vershynin_gram_bound_t",
    "vershynin_gram_bound",
    "vershynin_rows_bound",
    "EventThreshold",
    "event_threshold",
]

log = logging.getLogger(__name__)


def _check_delta(delta: float) -> float:
    d = float(delta)
    if not (0.0 < d < 1.0):
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")
    return d


def g(x: float) -> float:
    """``1 + 2 x + 2 sqrt(x)`` for ``x >= 0``."""
    if x < 0:
        raise InvalidParameterError(f"g needs x >= 0, got {x}")
    return 1.0 + 2.0 * x + 2.0 * math.sqrt(x)


@dataclass(frozen=True)
class DeviationConstants:
    """``x = ln(1/delta)`` and ``g(x)`` for a given failure probability."""

    delta: float
    x_delta: float
    g_of_x: float


def deviation_constants(delta: float) -> DeviationConstants:
    delta = _check_delta(delta)
    x = math.log(1.0 / delta)
    return DeviationConstants(delta, x, g(x))


def rows_constant(delta: float) -> float:
    """``1 + 2 ln(2/delta) + 2 sqrt(ln(2/delta))``, i.e. ``g(ln(2/delta))``."""
    delta = _check_delta(delta)
    return g(math.log(2.0 / delta))


def laurent_massart_bound(
    t: float,
    U: ArrayLike,
    delta: float,
    variant: Literal["classical", "as_stated"] = "classical",
) -> float:
    """Upper quantile for ``z^T (t U) z`` with ``z`` standard normal.

    Parameters
    ----------
    t : float
        Nonnegative scale.
    U : array_like
        Symmetric PSD matrix.
    delta : float
        Failure probability.
    variant : {"classical", "as_stated"}
        ``"classical"`` returns
        ``t (Tr U + 2 sqrt(Tr(U^2) x) + 2 rho(U) x)`` with ``x = ln(1/delta)``.
        This is the sharp form and is at most ``g(x) t Tr(U)``.
        ``"as_stated"`` returns ``g(x) t Tr(U^2)``. It is not a valid bound
        in general (it fails when ``U`` has small eigenvalues) and is kept
        only so its coverage can be measured.
    """
    delta = _check_delta(delta)
    if t < 0:
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    Us = check_symmetric(U, "U")
    vals = np.linalg.eigvalsh(Us)
    if vals[0] < -1e-10 * max(abs(vals[-1]), 1.0):
        raise InvalidInputError("U must be positive semidefinite")
    vals = np.clip(vals, 0.0, None)
    x = math.log(1.0 / delta)
    if variant == "classical":
        return t * (vals.sum() + 2.0 * math.sqrt(float(np.sum(vals**2)) * x) + 2.0 * vals[-1] * x)
    if variant == "as_stated":
        return g(x) * t * float(np.sum(vals**2))
    raise InvalidParameterError(f"unknown variant {variant!r}")


class SingularValueBounds(NamedTuple):
    low: float
    high: float
    failure_probability: float


def _check_dims(n: int, K: int) -> None:
    if n < 1 or K < 1 or K > n:
        raise InvalidParameterError(f"need 1 <= K <= n, got n={n}, K={K}")


def vershynin_singular_bounds(n: int, K: int, t: float) -> SingularValueBounds:
    """Interval for the singular values of an ``n x K`` standard Gaussian matrix.

    Outside ``[sqrt(n) - sqrt(K) - t, sqrt(n) + sqrt(K) + t]`` with probability
    at most ``2 exp(-t^2 / 2)``.
    """
    _check_dims(n, K)
    if t < 0:
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    rn, rk = math.sqrt(n), math.sqrt(K)
    return SingularValueBounds(rn - rk - t, rn + rk + t, min(1.0, 2.0 * math.exp(-t * t / 2.0)))


def vershynin_gram_bound_t(n: int, K: int, t: float) -> float:
    """``2 eps + eps^2`` with ``eps = sqrt(K/n) + t/sqrt(n)``.

    Bounds ``||| Z^T Z / n - I |||`` with probability ``1 - 2 exp(-t^2/2)``.
    """
    _check_dims(n, K)
    if t < 0:
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    eps = math.sqrt(K / n) + t / math.sqrt(n)
    return 2.0 * eps + eps * eps


def vershynin_gram_bound(n: int, K: int, delta: float) -> float:
    """Gram deviation bound at failure probability ``delta``."""
    delta = _check_delta(delta)
    return vershynin_gram_bound_t(n, K, math.sqrt(2.0 * math.log(2.0 / delta)))


def vershynin_rows_bound(n: int, K: int, delta: float, S: ArrayLike) -> float:
    """Bound on ``||| X^T X / n - S |||`` for ``n`` i.i.d. ``N(0, S)`` rows.

    Equals ``4 |||S||| D max(sqrt(K/n), K/n)`` with ``D = rows_constant(delta)``.
    """
    _check_dims(n, K)
    Ss = check_symmetric(S, "S")
    if Ss.shape[0] != K:
        raise InvalidInputError(f"S must be {K}x{K}")
    rho = float(np.max(np.abs(np.linalg.eigvalsh(Ss))))
    r = K / n
    return 4.0 * rho * rows_constant(delta) * max(math.sqrt(r), r)


@dataclass(frozen=True)
class EventThreshold:
    """Multiplier ``d`` in the high-probability event ``stat(E) <= d * psi``.

    ``kind`` names the statistic: ``"spectral"`` for ``rho(E^T E)``
    (models 1 to 3) and ``"trace"`` for ``sum_j ||E_j||^2`` (model 4).
    """

    scenario: int
    delta: float
    K: int
    d_value: float
    kind: str


def event_threshold(scenario: int, delta: float, K: int = 1) -> EventThreshold:
    """Event multiplier for a noise model.

    Models 1 to 3 use ``d = 1 + 4 D`` with ``D = rows_constant(delta)``,
    valid for every ``K <= n``. Model 4 uses ``d = g(ln(K/delta))``, a union
    bound over the ``K`` column quadratic forms.
    """
    delta = _check_delta(delta)
    if K < 1:
        raise InvalidParameterError(f"K must be >= 1, got {K}")
    if scenario in (1, 2, 3):
        D = rows_constant(delta)
        d = 1.0 + 4.0 * D
        log.debug("event threshold scenario=%d delta=%g D=%.17g d=%.17g", scenario, delta, D, d)
        return EventThreshold(scenario, delta, K, d, "spectral")
    if scenario == 4:
        x = math.log(K / delta)
        d = g(x)
        log.debug("event threshold scenario=4 delta=%g K=%d x=%.17g d=%.17g", delta, K, x, d)
        return EventThreshold(4, delta, K, d, "trace")
    raise InvalidParameterError(f"unknown scenario {scenario!r}")
