"""Low-rank plus sparse separation Z = A + E.

All solvers address  min ||A||_* + lam ||E||_1  s.t.  Z = A + E  and return a
:class:`Decomposition` with a per-iteration trace of
(relative residual, rank(A_k), nnz(E_k)).

* ``alm``  inexact augmented Lagrange multipliers (one A/E sweep per step)
* ``apg``  accelerated proximal gradient with continuation on the penalty
* ``svt``  singular value thresholding on the dual variable
* ``dual`` steepest ascent on the dual problem max <Z,Y> s.t. J(Y) <= 1
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

DEFAULT_TOL = {"alm": 1e-7, "apg": 1e-7, "svt": 5e-4, "dual": 2e-5}


@dataclass(frozen=True, eq=False)
class RpcaProblem:
    Z: np.ndarray
    lam: float | None = None  # default 1/sqrt(max(t, m))
    tol: float | None = None  # default per solver, see DEFAULT_TOL
    max_iter: int = 3000

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 2 or Z.size == 0:
            raise ContractError("Z must be a non-empty matrix")
        if not np.all(np.isfinite(Z)):
            raise ContractError("Z contains non-finite entries")
        object.__setattr__(self, "Z", Z)
        if self.lam is None:
            object.__setattr__(self, "lam", 1.0 / np.sqrt(max(Z.shape)))
        if self.lam <= 0:
            raise ContractError("lambda must be positive")
        if self.tol is not None and self.tol <= 0:
            raise ContractError("tol must be positive")
        if self.max_iter < 1:
            raise ContractError("max_iter must be at least 1")

    def tol_for(self, solver: str) -> float:
        return self.tol if self.tol is not None else DEFAULT_TOL[solver]


@dataclass(frozen=True, eq=False)
class Decomposition:
    A: np.ndarray
    E: np.ndarray
    iterations: int
    trace: np.ndarray = field(repr=False)  # rows: (c_k, rank(A_k), nnz(E_k))
    converged: bool
    wall_time: float
    solver: str = ""
    relative_error: float = float("nan")

    @property
    def rank(self) -> int:
        return int(self.trace[-1, 1]) if len(self.trace) else 0

    @property
    def support(self) -> np.ndarray:
        return self.E != 0


def soft_threshold(x, eps):
    if np.any(np.asarray(eps) < 0):
        raise ContractError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - eps, 0.0)


def _svt(M, eps):
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    s = s - eps
    r = int(np.count_nonzero(s > 0))
    return (U[:, :r] * s[:r]) @ Vt[:r], r


def singular_value_shrink(M, eps) -> np.ndarray:
    """U soft(S, eps) V^T."""
    if eps < 0:
        raise ContractError("threshold must be non-negative")
    return _svt(np.asarray(M, dtype=float), eps)[0]


def relative_error(Z, A, E) -> float:
    """||Z - A - E||_F / ||Z||_F (0 for an all-zero Z reconstructed exactly)."""
    nz = np.linalg.norm(Z)
    res = np.linalg.norm(Z - A - E)
    return float(res / nz) if nz > 0 else float(res)


class _Run:
    """Shared bookkeeping: trace rows, timing and the final record."""

    def __init__(self, name, Z):
        self.name, self.Z = name, Z
        self.norm = np.linalg.norm(Z)
        self.rows = []
        self.start = time.perf_counter()

    def log(self, A, E, rank):
        c = np.linalg.norm(self.Z - A - E) / self.norm
        self.rows.append((c, rank, np.count_nonzero(E)))
        return c

    def done(self, A, E, converged):
        elapsed = time.perf_counter() - self.start
        trace = np.array(self.rows, dtype=float).reshape(-1, 3)
        return Decomposition(A, E, len(self.rows), trace, bool(converged), elapsed, self.name,
                             relative_error(self.Z, A, E))


def _trivial(name, Z):
    if np.linalg.norm(Z) > 0:
        return None
    zero = np.zeros_like(Z)
    return Decomposition(zero, zero.copy(), 0, np.zeros((0, 3)), True, 0.0, name, 0.0)


def solve_alm(problem: RpcaProblem, omega: float = 1.5) -> Decomposition:
    """Inexact ALM: mu grows geometrically by ``omega`` each sweep."""
    Z, lam = problem.Z, problem.lam
    tol = problem.tol_for("alm")
    if (out := _trivial("alm", Z)) is not None:
        return out
    run = _Run("alm", Z)
    s1 = np.linalg.norm(Z, 2)
    Y = Z / max(s1, np.abs(Z).max() / lam)
    mu = 1.25 / s1
    E = np.zeros_like(Z)
    converged = False
    for _ in range(problem.max_iter):
        A, r = _svt(Z - E + Y / mu, 1.0 / mu)
        E = soft_threshold(Z - A + Y / mu, lam / mu)
        R = Z - A - E
        Y += mu * R
        mu *= omega
        if run.log(A, E, r) <= tol:
            converged = True
            break
    return run.done(A, E, converged)


def solve_apg(problem: RpcaProblem, eta: float = 0.9, mu_ratio: float = 1e-5) -> Decomposition:
    """Accelerated proximal gradient with penalty continuation.

    Minimises mu ||A||_* + mu lam ||E||_1 + 1/2 ||Z - A - E||^2 while mu
    decays from 0.99 ||Z||_2 to ``mu_ratio`` times that. Stops when the
    proximal subgradient residual falls below tol, so the exit point solves
    the penalised problem and leaves a small feasibility gap.
    """
    Z, lam = problem.Z, problem.lam
    tol = problem.tol_for("apg")
    if (out := _trivial("apg", Z)) is not None:
        return out
    run = _Run("apg", Z)
    L = 2.0  # Lipschitz constant of the smooth part in (A, E)
    mu = 0.99 * np.linalg.norm(Z, 2)
    mu_bar = mu_ratio * mu
    A = A_prev = np.zeros_like(Z)
    E = E_prev = np.zeros_like(Z)
    t_k = t_prev = 1.0
    converged = False
    for _ in range(problem.max_iter):
        w = (t_prev - 1.0) / t_k
        YA = A + w * (A - A_prev)
        YE = E + w * (E - E_prev)
        G = (YA + YE - Z) / L
        A_next, r = _svt(YA - G, mu / L)
        E_next = soft_threshold(YE - G, lam * mu / L)
        t_prev, t_k = t_k, 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        A_prev, A, E_prev, E = A, A_next, E, E_next
        mu = max(eta * mu, mu_bar)
        run.log(A, E, r)
        gap = A + E - YA - YE
        SA = L * (YA - A) + gap
        SE = L * (YE - E) + gap
        crit = np.sqrt(np.sum(SA**2) + np.sum(SE**2)) / (L * max(1.0, np.sqrt(np.sum(A**2) + np.sum(E**2))))
        if crit <= tol:
            converged = True
            break
    return run.done(A, E, converged)


def solve_svt(problem: RpcaProblem, tau: float = 1e4, delta: float = 0.9) -> Decomposition:
    """Singular value thresholding: shrink the dual variable, step along Z - A - E."""
    Z, lam = problem.Z, problem.lam
    tol = problem.tol_for("svt")
    if (out := _trivial("svt", Z)) is not None:
        return out
    run = _Run("svt", Z)
    Y = np.zeros_like(Z)
    converged = False
    for _ in range(problem.max_iter):
        A, r = _svt(Y, tau)
        E = soft_threshold(Y, lam * tau)
        Y += delta * (Z - A - E)
        if run.log(A, E, r) <= tol:
            converged = True
            break
    return run.done(A, E, converged)


def _normal_cone_split(Z, Y, svd, lam, active_tol, E_prev, inner=20, inner_tol=1e-8):
    """Split Z into A in the normal cone of ||.||_2 at Y and E in that of ||.||_inf/lam.

    Alternating projections. A lives in U1 W V1^T (W PSD, U1/V1 the near-top
    singular vectors); E lives on the near-peak entries of Y with the sign of Y.
    Both projections are done in those small coordinates; full matrices are
    formed once at the end. ``E_prev`` warm-starts E.
    """
    U, s, Vt = svd
    level = max(s[0], np.abs(Y).max() / lam)
    spec_on = s[0] >= (1.0 - active_tol) * level
    peak = np.abs(Y).max()
    inf_on = peak / lam >= (1.0 - active_tol) * level
    k = np.count_nonzero(s >= (1.0 - active_tol) * s[0]) if spec_on else 0
    U1, V1 = U[:, :k], Vt[:k].T
    idx = np.flatnonzero(np.abs(Y) >= (1.0 - active_tol) * peak) if inf_on else np.zeros(0, dtype=int)
    rows, cols = np.unravel_index(idx, Z.shape)
    sgn = np.sign(Y.ravel()[idx])
    z_act = Z.ravel()[idx]
    Ur, Vc = U1[rows], V1[cols]  # singular-vector rows at the active entries
    ZW = U1.T @ Z @ V1
    e = E_prev.ravel()[idx]
    W = np.zeros((k, k))
    scale = inner_tol * np.linalg.norm(Z)
    for _ in range(inner):
        if k:
            M = ZW - (Ur * e[:, None]).T @ Vc
            M = 0.5 * (M + M.T)
            ev, Q = np.linalg.eigh(M)
            W_new = (Q * np.maximum(ev, 0.0)) @ Q.T
        else:
            W_new = W
        a_act = np.sum((Ur @ W_new) * Vc, axis=1)
        e_new = np.maximum((z_act - a_act) * sgn, 0.0) * sgn if idx.size else e
        moved = np.linalg.norm(W_new - W) + np.linalg.norm(e_new - e)
        W, e = W_new, e_new
        if moved <= scale:
            break
    A = U1 @ W @ V1.T
    E = np.zeros(Z.size)
    E[idx] = e
    return A, E.reshape(Z.shape), k


def solve_dual(problem: RpcaProblem, active_tol: float = 0.1) -> Decomposition:
    """Steepest ascent on max <Z, Y> over J(Y) = max(||Y||_2, ||Y||_inf / lam) <= 1.

    Each step projects Z onto the normal cone of J at Y; the projection gives
    the primal pair (A, E) and its residual Z - A - E is the ascent direction.
    The step size comes from a doubling/halving search on <Z, Y>/J(Y).
    """
    Z, lam = problem.Z, problem.lam
    tol = problem.tol_for("dual")
    if (out := _trivial("dual", Z)) is not None:
        return out
    run = _Run("dual", Z)

    def normalised(M):
        svd = np.linalg.svd(M, full_matrices=False)
        level = max(svd[1][0], np.abs(M).max() / lam)
        return M / level, (svd[0], svd[1] / level, svd[2])

    Y, svd = normalised(np.sign(Z))
    value = np.sum(Z * Y)
    step = 1.0 / np.linalg.norm(Z)
    converged = False
    E = np.zeros_like(Z)
    for _ in range(problem.max_iter):
        A, E, r = _normal_cone_split(Z, Y, svd, lam, active_tol, E)
        D = Z - A - E
        if run.log(A, E, r) <= tol:
            converged = True
            break
        step *= 2.0
        for _ in range(40):
            cand, cand_svd = normalised(Y + step * D)
            cand_value = np.sum(Z * cand)
            if cand_value > value:
                break
            step *= 0.5
        else:
            break  # no ascent left at this step resolution
        Y, svd, value = cand, cand_svd, cand_value
    return run.done(A, E, converged)


SOLVERS = {"alm": solve_alm, "apg": solve_apg, "svt": solve_svt, "dual": solve_dual}


def solve(problem: RpcaProblem, solver: str = "alm") -> Decomposition:
    try:
        fn = SOLVERS[solver]
    except KeyError:
        raise ContractError(f"unknown solver {solver!r}; expected one of {sorted(SOLVERS)}") from None
    return fn(problem)


def objective(A, E, lam) -> float:
    return float(np.linalg.norm(A, "nuc") + lam * np.abs(E).sum())


def export_trace(dec: Decomposition, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "relative_error", "rank", "nnz_e"])
        for k, (c, r, nnz) in enumerate(dec.trace, start=1):
            writer.writerow([k, repr(float(c)), int(r), int(nnz)])
