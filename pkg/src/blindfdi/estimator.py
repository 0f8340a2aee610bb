"""Weighted least-squares state estimation and bad-data detection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dcmodel import DcJacobian
from .errors import ContractError, ObservabilityError

CLEAN, BAD_DATA = "clean", "bad_data"


@dataclass(frozen=True, eq=False)
class NoiseModel:
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 1 or not np.all(sigma > 0):
            raise ContractError("noise standard deviations must be a vector of positive values")
        object.__setattr__(self, "sigma", sigma)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.sigma**2)

    @classmethod
    def from_snr(cls, signal: np.ndarray, snr_db) -> "NoiseModel":
        """sigma_i = rms(column i of ``signal``) * 10**(-snr_i/20)."""
        return cls(snr_sigma(signal, snr_db))


def snr_sigma(signal: np.ndarray, snr_db) -> np.ndarray:
    signal = np.atleast_2d(np.asarray(signal, dtype=float))
    rms = np.sqrt(np.mean(signal**2, axis=0))
    return rms * 10.0 ** (-np.asarray(snr_db, dtype=float) / 20.0)


@dataclass(frozen=True, eq=False)
class DetectionOutcome:
    wsse: float
    tau: float
    verdict: str
    normalized_residuals: np.ndarray
    psi: int
    estimate: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    standardized_residuals: np.ndarray = field(repr=False)

    @property
    def is_bad(self) -> bool:
        return self.verdict == BAD_DATA


class _Weighted:
    """QR factorisation of R^{-1/2} H, reused for every estimate on the same sensors."""

    def __init__(self, H: np.ndarray, sigma: np.ndarray):
        self.w = 1.0 / sigma
        self.Q, self.Rf = np.linalg.qr(H * self.w[:, None])
        diag = np.abs(np.diag(self.Rf))
        if diag.size == 0 or diag.min() <= 1e-10 * max(diag.max(), 1.0):
            raise ObservabilityError("weighted Jacobian is rank deficient")

    def solve(self, z: np.ndarray) -> np.ndarray:
        rhs = (z * self.w) @ self.Q
        return np.linalg.solve(self.Rf, rhs.T).T

    def leverage(self) -> np.ndarray:
        return np.sum(self.Q**2, axis=1)


def _check(jac: DcJacobian, z, noise: NoiseModel) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != jac.m:
        raise ContractError(f"measurement vector has length {z.shape[-1]}, expected {jac.m}")
    if noise.sigma.shape != (jac.m,):
        raise ContractError("noise model does not match the number of sensors")
    return z


def wls_estimate(jac: DcJacobian, z, noise: NoiseModel) -> np.ndarray:
    """argmin_x ||R^{-1/2}(z - Hx)||^2 via QR; ``z`` may hold one measurement per row."""
    z = _check(jac, z, noise)
    return _Weighted(jac.H, noise.sigma).solve(z)


def residual(jac: DcJacobian, z, x_hat) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if z.shape[-1] != jac.m or x_hat.shape[-1] != jac.n:
        raise ContractError("measurement or state has the wrong length")
    return z - x_hat @ jac.H.T


def wsse(jac: DcJacobian, z, noise: NoiseModel) -> np.ndarray | float:
    """Weighted sum of squared residuals of the WLS fit (vectorised over rows of ``z``)."""
    z = _check(jac, z, noise)
    solver = _Weighted(jac.H, noise.sigma)
    r = residual(jac, z, solver.solve(z)) / noise.sigma
    out = np.sum(r**2, axis=-1)
    return float(out) if out.ndim == 0 else out


def chi_square_threshold(psi: int, confidence: float = 0.95) -> float:
    if not 0.0 < confidence < 1.0:
        raise ContractError("confidence must lie strictly between 0 and 1")
    if psi < 1:
        raise ContractError("degrees of freedom must be at least 1")
    return float(stats.chi2.ppf(confidence, psi))


def _outcome(H, z, sigma, confidence, state_len):
    solver = _Weighted(H, sigma)
    x_hat = solver.solve(z)
    r = z - H @ x_hat
    scaled = r / sigma
    value = float(scaled @ scaled)
    psi = H.shape[0] - state_len
    tau = chi_square_threshold(psi, confidence)
    # r_i / sqrt(Omega_ii) with Omega = R - H G^-1 H^T; critical sensors (Omega_ii ~ 0) score 0
    spread = 1.0 - solver.leverage()
    standardized = np.where(spread > 1e-10, np.abs(scaled) / np.sqrt(np.clip(spread, 1e-10, None)), 0.0)
    return DetectionOutcome(
        wsse=value,
        tau=tau,
        verdict=BAD_DATA if value >= tau else CLEAN,
        normalized_residuals=np.abs(scaled),
        psi=psi,
        estimate=x_hat,
        residual=r,
        standardized_residuals=standardized,
    )


def detect(jac: DcJacobian, z, noise: NoiseModel, confidence: float = 0.95) -> DetectionOutcome:
    """Chi-square test on the WLS objective, with residuals prepared for identification."""
    z = _check(jac, z, noise)
    if z.ndim != 1:
        raise ContractError("detect expects a single measurement vector")
    return _outcome(jac.H, z, noise.sigma, confidence, jac.n)


@dataclass(frozen=True, eq=False)
class ScrubResult:
    z_clean: np.ndarray
    kept: np.ndarray
    removed: tuple[int, ...]
    outcome: DetectionOutcome
    stop_reason: str  # "clean", "max_rounds" or "observability"

    def __iter__(self):
        return iter((self.z_clean, self.removed, self.outcome))


def scrub(jac: DcJacobian, z, noise: NoiseModel, confidence: float = 0.95, max_rounds: int = 10) -> ScrubResult:
    """Remove the largest-normalized-residual sensor while the chi-square test fails.

    Identification ranks sensors by r_i / sqrt(Omega_ii). Removal stops early,
    with ``stop_reason="observability"``, when dropping the next sensor would
    leave H without full column rank or without any redundancy left to test.
    """
    z = _check(jac, z, noise)
    keep = np.ones(jac.m, dtype=bool)
    removed: list[int] = []
    outcome = _outcome(jac.H, z, noise.sigma, confidence, jac.n)
    reason = "clean"
    while outcome.is_bad:
        if len(removed) >= max_rounds:
            reason = "max_rounds"
            break
        active = np.flatnonzero(keep)
        worst = active[int(np.argmax(outcome.standardized_residuals))]
        trial = keep.copy()
        trial[worst] = False
        if trial.sum() <= jac.n or np.linalg.matrix_rank(jac.H[trial]) < jac.n:
            reason = "observability"
            break
        keep = trial
        removed.append(int(worst))
        outcome = _outcome(jac.H[keep], z[keep], noise.sigma[keep], confidence, jac.n)
    z_clean = np.where(keep, z, np.nan)
    return ScrubResult(z_clean, keep, tuple(removed), outcome, reason)
