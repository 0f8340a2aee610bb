"""PCA / SVD estimates of the measurement subspace used by blind attacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

from .errors import ContractError

RANK_RULES = ("cumulative", "strict")


@dataclass(frozen=True, eq=False)
class PcaModel:
    transform: np.ndarray  # m x m, eigenvectors as columns, descending eigenvalue
    eigenvalues: np.ndarray
    mean: np.ndarray
    shape: tuple[int, int]

    @property
    def energy(self) -> np.ndarray:
        """Cumulative eigenvalue fraction."""
        total = self.eigenvalues.sum()
        return np.cumsum(self.eigenvalues) / total if total > 0 else np.zeros_like(self.eigenvalues)


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    H_pca: np.ndarray
    rho: int
    gamma_used: float | None = None
    eigenvalues: np.ndarray | None = None  # the rho retained values, for coefficient scaling


def _orient(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every column positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _as_array(Z) -> np.ndarray:
    Z = np.asarray(getattr(Z, "Z", Z), dtype=float)
    if Z.ndim != 2:
        raise ContractError("measurement matrix must be two-dimensional")
    if Z.shape[0] < 2:
        raise ContractError("PCA needs at least two observations")
    return Z


def covariance(Z, center: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance with 1/(t-1) scaling; uncentered second moment when ``center`` is false."""
    Z = _as_array(Z)
    mean = Z.mean(axis=0) if center else np.zeros(Z.shape[1])
    D = Z - mean
    return D.T @ D / (Z.shape[0] - 1), mean


def fit_pca(Z, center: bool = True) -> PcaModel:
    Z = _as_array(Z)
    cov, mean = covariance(Z, center)
    v, M = np.linalg.eigh(cov)
    order = np.argsort(v)[::-1]
    v = v[order]
    v[v < 0] = 0.0  # round-off below zero
    return PcaModel(_orient(M[:, order]), v, mean, Z.shape)


def select_rank(v, gamma: float = 0.995, rule: str = "cumulative") -> int:
    """Number of influential components for eigenvalues ``v`` (descending).

    ``cumulative``: smallest k whose energy fraction reaches ``gamma``.
    ``strict``: keep adding components while the fraction is still <= ``gamma``
    (differs only at exact ties).
    """
    v = np.asarray(v, dtype=float)
    if not 0.0 < gamma <= 1.0:
        raise ContractError("gamma must lie in (0, 1]")
    if v.ndim != 1 or v.size == 0 or np.any(np.diff(v) > 1e-12 * max(v[0], 1.0)):
        raise ContractError("eigenvalues must be a non-empty descending vector")
    total = v.sum()
    if total <= 0:
        raise ContractError("all eigenvalues are zero")
    frac = np.cumsum(v) / total
    if rule == "cumulative":
        rho = int(np.searchsorted(frac, gamma - 1e-12, side="left")) + 1
    elif rule == "strict":
        rho = int(np.searchsorted(frac, gamma, side="right")) + 1
    else:
        raise ContractError(f"unknown rank rule {rule!r}")
    return min(rho, v.size)


def reduced_basis(model: PcaModel, rho: int, gamma: float | None = None) -> ReducedBasis:
    m = model.transform.shape[1]
    if not 1 <= rho <= m:
        raise ContractError(f"rho must lie in [1, {m}], got {rho}")
    return ReducedBasis(model.transform[:, :rho].copy(), int(rho), gamma, model.eigenvalues[:rho].copy())


def svd_subspace(Z, rho: int, center: bool = True) -> ReducedBasis:
    """Leading left singular vectors of the sample covariance."""
    cov, _ = covariance(Z, center)
    m = cov.shape[0]
    if not 1 <= rho <= m:
        raise ContractError(f"rho must lie in [1, {m}], got {rho}")
    U, s, _ = np.linalg.svd(cov)
    return ReducedBasis(_orient(U[:, :rho]), int(rho), None, s[:rho].copy())


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians) between the column spaces of A and B."""
    return subspace_angles(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def outside_fraction(H, a) -> float:
    """||(I - P_H) a|| / ||a||: how much of ``a`` leaves the column space of H."""
    Q, _ = np.linalg.qr(np.asarray(H, dtype=float))
    a = np.asarray(a, dtype=float)
    return float(np.linalg.norm(a - Q @ (Q.T @ a)) / np.linalg.norm(a))
