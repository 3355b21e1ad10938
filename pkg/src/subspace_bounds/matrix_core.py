"""Dense linear-algebra primitives for comparing column spaces.

Projectors are built from a thin SVD of the basis, never from an explicit
inverse of the Gram matrix. The plain projector and the
ridge-regularized projector share one code path, so at ``alpha == 0``
they agree exactly.

Two scales are used throughout:

* ``dist = |||P - Q||| / sqrt(n)``, a metric on projectors;
* ``sq = |||P - Q|||**2 / n``, the quantity the error bounds control.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError, InvalidParameterError, RankDeficiencyError

__all__ = [
    "RANK_RTOL",
    "SYMMETRY_RTOL",
    "SpectralSummary",
    "SymEigen",
    "SubspaceBasis",
    "ProjectionDistance",
    "as_matrix",
    "as_basis",
    "check_symmetric",
    "sym_eigen",
    "spectral_norm",
    "gram_summary",
    "is_full_rank",
    "projector",
    "regularized_projector",
    "projection_distance",
    "projector_difference_norm",
    "principal_angles",
]

#: Full rank iff rho_min(H^T H) > RANK_RTOL * rho(H^T H) * max(n, K).
RANK_RTOL = 1e-10
#: Matrices passed as symmetric may deviate from symmetry by this relative amount.
SYMMETRY_RTOL = 1e-8

FloatArray = NDArray[np.float64]


def as_matrix(M: ArrayLike, name: str = "matrix") -> FloatArray:
    """Return ``M`` as a finite float64 2-D array or raise InvalidInputError."""
    try:
        arr = np.asarray(M, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} is not numeric: {exc}") from None
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return arr


def check_symmetric(M: ArrayLike, name: str = "matrix") -> FloatArray:
    """Validate near-symmetry and return the symmetrized matrix ``(M + M^T) / 2``."""
    arr = as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    scale = float(np.max(np.abs(arr)))
    if float(np.max(np.abs(arr - arr.T))) > SYMMETRY_RTOL * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    return 0.5 * (arr + arr.T)


@dataclass(frozen=True)
class SpectralSummary:
    """Extreme eigenvalues, trace and condition number of a symmetric matrix."""

    rho: float
    rho_min: float
    trace: float
    cond: float

    @classmethod
    def from_eigenvalues(cls, values: ArrayLike) -> "SpectralSummary":
        vals = np.asarray(values, dtype=np.float64)
        rho = float(vals.max())
        rho_min = float(vals.min())
        cond = rho / rho_min if rho_min > 0 else float("inf")
        return cls(rho=rho, rho_min=rho_min, trace=float(vals.sum()), cond=cond)


@dataclass(frozen=True, eq=False)
class SymEigen:
    """Eigendecomposition ``M = V diag(values) V^T`` with values descending."""

    values: FloatArray
    vectors: FloatArray

    @cached_property
    def summary(self) -> SpectralSummary:
        return SpectralSummary.from_eigenvalues(self.values)


def sym_eigen(M: ArrayLike, name: str = "matrix") -> SymEigen:
    """Symmetric eigendecomposition with eigenvalues sorted in descending order.

    Raises
    ------
    InvalidInputError
        If ``M`` is not square, not finite or not symmetric to 1e-8 relative.
    """
    sym = check_symmetric(M, name)
    vals, vecs = np.linalg.eigh(sym)
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SymEigen(vals, vecs)


def spectral_norm(M: ArrayLike) -> float:
    """Largest singular value of ``M``."""
    arr = as_matrix(M)
    return float(np.linalg.norm(arr, 2))


def _gram(H: FloatArray) -> FloatArray:
    G = H.T @ H
    return 0.5 * (G + G.T)


def gram_summary(H: ArrayLike) -> SpectralSummary:
    """Spectral summary of ``H^T H``."""
    arr = as_matrix(H, "H")
    return sym_eigen(_gram(arr), "H^T H").summary


def is_full_rank(summary: SpectralSummary, n: int, K: int) -> bool:
    """Rank test used everywhere: ``rho_min > RANK_RTOL * rho * max(n, K)``."""
    return summary.rho_min > RANK_RTOL * summary.rho * max(n, K)


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """An ``n x K`` matrix with full column rank together with its Gram spectrum.

    Build instances with :meth:`from_matrix`, which validates the rank.
    The stored array is read-only.
    """

    H: FloatArray
    gram_eigen: SymEigen

    @classmethod
    def from_matrix(cls, H: ArrayLike) -> "SubspaceBasis":
        arr = as_matrix(H, "H").copy()
        n, K = arr.shape
        if K > n:
            raise InvalidInputError(f"basis needs K <= n, got shape {arr.shape}")
        eig = sym_eigen(_gram(arr), "H^T H")
        if not is_full_rank(eig.summary, n, K):
            raise RankDeficiencyError(
                f"H is rank deficient: rho_min(H^T H)={eig.summary.rho_min:.3e}, "
                f"rho={eig.summary.rho:.3e}"
            )
        arr.setflags(write=False)
        return cls(arr, eig)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]

    @property
    def gram_summary(self) -> SpectralSummary:
        return self.gram_eigen.summary

    @cached_property
    def gram(self) -> FloatArray:
        return _gram(self.H)

    @cached_property
    def gram_inverse(self) -> FloatArray:
        """``(H^T H)^{-1}`` assembled from the eigendecomposition."""
        V, lam = self.gram_eigen.vectors, self.gram_eigen.values
        inv = (V / lam) @ V.T
        return 0.5 * (inv + inv.T)

    def solve(self, B: ArrayLike, alpha: float = 0.0) -> FloatArray:
        """Return ``(H^T H + alpha I)^{-1} B``."""
        V, lam = self.gram_eigen.vectors, self.gram_eigen.values
        rhs = np.asarray(B, dtype=np.float64)
        return V @ ((V.T @ rhs) / _shifted(lam, alpha).reshape((-1,) + (1,) * (rhs.ndim - 1)))


def as_basis(H: "SubspaceBasis | ArrayLike") -> SubspaceBasis:
    """Coerce an array to a validated :class:`SubspaceBasis`."""
    return H if isinstance(H, SubspaceBasis) else SubspaceBasis.from_matrix(H)


def _shifted(lam: FloatArray, alpha: float) -> FloatArray:
    return np.maximum(lam, 0.0) + alpha


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha < 0:
        raise InvalidParameterError(f"alpha must be finite and >= 0, got {alpha}")
    return alpha


def _whitened(H: FloatArray, alpha: float) -> FloatArray:
    """``W`` with ``W W^T = H (H^T H + alpha I)^{-1} H^T``.

    Uses the thin SVD ``H = U diag(s) V^T``, so ``W = U diag(s / sqrt(s^2 + alpha))``.
    Working on ``H`` directly avoids squaring its condition number.
    """
    n, K = H.shape
    if alpha == 0.0:
        if K > n or not is_full_rank(sym_eigen(_gram(H), "H^T H").summary, n, K):
            raise RankDeficiencyError("projector requires H with full column rank")
        U, _, _ = np.linalg.svd(H, full_matrices=False)
        return U
    U, s, _ = np.linalg.svd(H, full_matrices=False)
    return U * (s / np.sqrt(s * s + alpha))


def regularized_projector(H: ArrayLike, alpha: float) -> FloatArray:
    """Ridge-regularized projector ``H (H^T H + alpha I)^{-1} H^T``.

    Parameters
    ----------
    H : array_like, shape (n, K)
        Any real matrix; full column rank is only needed when ``alpha == 0``.
    alpha : float
        Nonnegative ridge parameter.

    Returns
    -------
    ndarray, shape (n, n)
        Symmetric matrix with eigenvalues in ``[0, 1)`` for ``alpha > 0``.
    """
    alpha = _check_alpha(alpha)
    arr = H.H if isinstance(H, SubspaceBasis) else as_matrix(H, "H")
    W = _whitened(arr, alpha)
    P = W @ W.T
    return 0.5 * (P + P.T)


def projector(H: ArrayLike) -> FloatArray:
    """Orthogonal projector onto the column span of a full-rank ``H``.

    Raises
    ------
    RankDeficiencyError
        If ``H`` fails the rank test.
    """
    return regularized_projector(H, 0.0)


class ProjectionDistance(NamedTuple):
    """Both scales of a projector discrepancy."""

    dist: float
    sq_norm_over_n: float


def projection_distance(P: ArrayLike, Q: ArrayLike, n: int | None = None) -> ProjectionDistance:
    """Normalized spectral distance between two ``n x n`` symmetric matrices.

    Returns ``dist = |||P - Q||| / sqrt(n)`` and ``dist**2``.
    """
    Pm = as_matrix(P, "P")
    Qm = as_matrix(Q, "Q")
    if Pm.shape != Qm.shape or Pm.shape[0] != Pm.shape[1]:
        raise InvalidInputError(f"projectors must be square with equal shapes, got {Pm.shape}, {Qm.shape}")
    size = Pm.shape[0]
    if n is not None and n != size:
        raise InvalidInputError(f"n={n} does not match projector size {size}")
    D = Pm - Qm
    norm = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (D + D.T)))))
    dist = norm / np.sqrt(size)
    return ProjectionDistance(dist, dist * dist)


def projector_difference_norm(H: ArrayLike, H_hat: ArrayLike, alpha: float = 0.0) -> float:
    """Spectral norm of ``P_[H] - P_[H_hat]_alpha`` without forming ``n x n`` matrices.

    Both projectors act inside ``span[H, H_hat]``, so the difference is
    compressed onto an orthonormal basis of that span (at most ``2K``
    columns) before the eigenvalue computation.
    """
    alpha = _check_alpha(alpha)
    A = H.H if isinstance(H, SubspaceBasis) else as_matrix(H, "H")
    B = as_matrix(H_hat, "H_hat")
    if A.shape != B.shape:
        raise InvalidInputError(f"H and H_hat shapes differ: {A.shape} vs {B.shape}")
    n, K = A.shape
    if 2 * K >= n:
        Pd = regularized_projector(A, 0.0) - regularized_projector(B, alpha)
        return float(np.max(np.abs(np.linalg.eigvalsh(Pd))))
    Q, R = np.linalg.qr(np.hstack([A, B]))
    W1 = _whitened(A, 0.0)
    W2 = _whitened(B, alpha)
    C1 = Q.T @ W1
    C2 = Q.T @ W2
    D = C1 @ C1.T - C2 @ C2.T
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (D + D.T)))))


def _orthonormal_basis(H: FloatArray, name: str) -> FloatArray:
    n, K = H.shape
    if K > n or not is_full_rank(gram_summary(H), n, K):
        raise RankDeficiencyError(f"{name} must have full column rank")
    Q, _ = np.linalg.qr(H)
    return Q


def principal_angles(H1: ArrayLike, H2: ArrayLike) -> FloatArray:
    """Principal angles between two column spans, in ascending order.

    Cosines come from the singular values of ``Q1^T Q2``. Angles whose cosine
    exceeds ``1/sqrt(2)`` are recomputed from sines, which keeps small angles
    accurate.

    Returns
    -------
    ndarray
        ``min(K1, K2)`` angles in ``[0, pi/2]``.
    """
    A = as_matrix(H1, "H1")
    B = as_matrix(H2, "H2")
    if A.shape[0] != B.shape[0]:
        raise InvalidInputError("bases must have the same number of rows")
    if A.shape[1] < B.shape[1]:
        A, B = B, A
    QA = _orthonormal_basis(A, "H1")
    QB = _orthonormal_basis(B, "H2")
    C = QA.T @ QB
    cos_desc = np.clip(np.linalg.svd(C, compute_uv=False), -1.0, 1.0)
    residual = QB - QA @ C
    sin_asc = np.clip(np.linalg.svd(residual, compute_uv=False), -1.0, 1.0)[::-1]
    theta = np.where(cos_desc**2 >= 0.5, np.arcsin(sin_asc), np.arccos(cos_desc))
    return np.sort(theta)
