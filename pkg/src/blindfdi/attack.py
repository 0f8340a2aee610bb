"""Attack vectors: known-H, random, and data-driven blind attacks.

Blind attacks estimate the measurement subspace from a window of past
measurements and inject ``a = H_pca c``. The robust variant first strips
sparse gross errors from the window with ALM, then runs PCA on the
recovered low-rank part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dcmodel import DcJacobian
from .errors import ContractError, ConvergenceError
from .recover import RpcaProblem, solve_alm
from .subspace import ReducedBasis, fit_pca, reduced_basis, select_rank

STRATEGIES = ("known_h", "random", "pca_blind", "svd_blind", "alm_blind")
COEFFICIENT_MODES = ("eigen", "norm")


@dataclass(frozen=True, eq=False)
class AttackVector:
    a: np.ndarray
    strategy: str
    c: np.ndarray
    basis_rank_used: int
    seed: object = None

    def apply(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.a.size:
            raise ContractError("attack and measurement lengths differ")
        return z + self.a


def _nonzero(c, name="c"):
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or not np.any(c):
        raise ContractError(f"{name} must be a non-zero vector")
    return c


def draw_coefficients(rho: int, rng, mode: str = "eigen", scale: float = 1.0, eigenvalues=None) -> np.ndarray:
    """Random non-zero coefficients for a rho-column basis.

    ``eigen``: scale * sqrt(v_j) * N(0,1), i.e. a draw shaped like the data along
    each principal direction. ``norm``: a Gaussian direction rescaled to norm ``scale``.
    """
    if rho < 1:
        raise ContractError("rho must be at least 1")
    if scale <= 0:
        raise ContractError("coefficient scale must be positive")
    rng = np.random.default_rng(rng)
    while True:
        xi = rng.standard_normal(rho)
        if np.any(xi):
            break
    if mode == "eigen":
        if eigenvalues is None:
            raise ContractError("eigen-scaled coefficients need the basis eigenvalues")
        return scale * np.sqrt(np.clip(np.asarray(eigenvalues, dtype=float)[:rho], 0.0, None)) * xi
    if mode == "norm":
        return scale * xi / np.linalg.norm(xi)
    raise ContractError(f"unknown coefficient mode {mode!r}")


def attack_known_h(jac: DcJacobian, c) -> AttackVector:
    c = _nonzero(c)
    if c.size != jac.n:
        raise ContractError(f"c has length {c.size}, expected {jac.n}")
    return AttackVector(jac.H @ c, "known_h", c, jac.n)


def attack_random(m: int, magnitude: float, seed=None) -> AttackVector:
    """Gaussian direction with norm ``magnitude``; not aligned with any subspace."""
    if magnitude <= 0:
        raise ContractError("magnitude must be positive")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(m)
    return AttackVector(magnitude * g / np.linalg.norm(g), "random", np.zeros(0), 0, seed)


def attack_blind(basis: ReducedBasis, c, z, strategy: str = "pca_blind"):
    """a = H_pca c; returns the attack and z + a."""
    c = _nonzero(c)
    if c.size != basis.rho:
        raise ContractError(f"c has length {c.size}, basis has rank {basis.rho}")
    a = basis.H_pca @ c
    vec = AttackVector(a, strategy, c, basis.rho)
    return vec, vec.apply(z)


def attack_alm(
    Z,
    gamma: float = 0.995,
    c_seed=None,
    z=None,
    *,
    lam: float | None = None,
    coefficients: str = "eigen",
    scale: float = 1.0,
    center: bool = True,
    rank_rule: str = "cumulative",
    tol: float = 1e-7,
    max_iter: int = 3000,
):
    """Robust blind attack from a window that may hold gross errors.

    1. ALM splits Z into low-rank A and sparse E.
    2-4. PCA on A, rank from the cumulative-energy rule, H_pca = leading columns.
    5-6. a = H_pca c with random c; z_attack = z + a.

    ``lam`` defaults to 1/sqrt(min(t, m)). Returns (attack, z_attack, decomposition);
    raises ConvergenceError carrying the partial decomposition if ALM stalls.
    """
    Z = np.asarray(getattr(Z, "Z", Z), dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ContractError("attack_alm needs a t x m window with t >= 2")
    if z is None:
        raise ContractError("attack_alm needs the measurement vector to attack")
    if lam is None:
        lam = 1.0 / np.sqrt(min(Z.shape))
    dec = solve_alm(RpcaProblem(Z, lam=lam, tol=tol, max_iter=max_iter))
    if not dec.converged:
        raise ConvergenceError(
            f"ALM stopped after {dec.iterations} iterations at relative error {dec.relative_error:.3e}",
            dec,
        )
    model = fit_pca(dec.A, center=center)
    rho = select_rank(model.eigenvalues, gamma, rank_rule)
    basis = reduced_basis(model, rho, gamma)
    c = draw_coefficients(rho, c_seed, coefficients, scale, basis.eigenvalues)
    vec, z_attack = attack_blind(basis, c, z, "alm_blind")
    vec = AttackVector(vec.a, "alm_blind", c, rho, c_seed)
    return vec, z_attack, dec
