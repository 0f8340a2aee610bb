"""Synthetic measurement windows Z (t x m) around an operating point.

Each row is one time instant. States vary around ``x0`` in one of two ways:

* ``"injection"`` (default): per-unit bus injections get i.i.d. Gaussian
  perturbations of size ``load_sigma`` and angles follow through B^-1, so
  state correlations come from the network the way load variation produces them.
* ``"angle"``: every angle gets an i.i.d. Gaussian perturbation of size
  ``state_sigma`` radians.

Sensor noise is Gaussian with sigma_i = rms(column i) * 10**(-snr_i/20), where
snr_i is either a fixed value or drawn uniformly per sensor from a range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dcmodel import DcJacobian, evaluate, injection_sensitivity
from .errors import ContractError
from .estimator import snr_sigma

STATE_MODELS = ("injection", "angle")
GROSS_RULES = ("multiple_of_max", "missing_as_zero")


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    Z: np.ndarray
    truth_A: np.ndarray | None = None  # noiseless plus Gaussian noise, before gross errors
    states: np.ndarray | None = field(default=None, repr=False)
    sigma: np.ndarray | None = None
    snr_db: np.ndarray | None = None
    seed: object = None
    gross_mask: np.ndarray | None = field(default=None, repr=False)
    gross_values: np.ndarray | None = field(default=None, repr=False)

    @property
    def t(self) -> int:
        return self.Z.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[1]

    @property
    def gross_count(self) -> int:
        return 0 if self.gross_mask is None else int(self.gross_mask.sum())


@dataclass(frozen=True)
class GrossErrorSpec:
    density: float = 0.0
    rule: str = "multiple_of_max"
    multiple: float = 100.0
    count: int | None = None  # overrides density when set
    seed: object = None

    def __post_init__(self):
        if self.rule not in GROSS_RULES:
            raise ContractError(f"unknown gross-error rule {self.rule!r}")
        if not 0.0 <= self.density <= 0.5:
            raise ContractError("gross-error density must lie in [0, 0.5]; denser corruption is not sparse")
        if self.rule == "multiple_of_max" and self.multiple <= 1:
            raise ContractError("gross-error multiple must exceed 1")
        if self.count is not None and self.count < 0:
            raise ContractError("gross-error count must be non-negative")

    def entries(self, t: int, m: int) -> int:
        if self.count is not None:
            if self.count > 0.5 * t * m:
                raise ContractError("gross-error count exceeds half of the matrix")
            return int(self.count)
        return math.ceil(round(self.density * t * m, 9))


@dataclass(frozen=True, eq=False)
class StateModel:
    """Distribution of state vectors around ``x0``."""

    x0: np.ndarray
    kind: str = "injection"
    scale: float = 1.0
    sensitivity: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def build(cls, jac: DcJacobian, x0, kind="injection", state_sigma=0.01, load_sigma=1.0):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (jac.n,):
            raise ContractError(f"operating state has shape {x0.shape}, expected ({jac.n},)")
        if kind == "injection":
            if load_sigma < 0:
                raise ContractError("load_sigma must be non-negative")
            return cls(x0, kind, float(load_sigma), injection_sensitivity(jac))
        if kind == "angle":
            if state_sigma < 0:
                raise ContractError("state_sigma must be non-negative")
            return cls(x0, kind, float(state_sigma))
        raise ContractError(f"unknown state model {kind!r}; expected one of {STATE_MODELS}")

    def sample(self, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
        shape = (len(self.x0),) if count is None else (count, len(self.x0))
        draw = self.scale * rng.standard_normal(shape)
        if self.sensitivity is not None:
            draw = draw @ self.sensitivity.T
        return self.x0 + draw


def _snr_vector(snr_db, m, rng):
    if np.isscalar(snr_db):
        return np.full(m, float(snr_db))
    lo, hi = snr_db
    if lo > hi:
        raise ContractError("snr range must be (low, high)")
    return rng.uniform(lo, hi, m)


def generate(
    jac: DcJacobian,
    x0,
    t: int,
    state_sigma: float = 0.01,
    snr_db=(20.0, 35.0),
    seed=None,
    *,
    state_model: str = "injection",
    load_sigma: float = 1.0,
) -> MeasurementMatrix:
    """Draw a t x m window; ``snr_db`` is a scalar, a (low, high) range or ``inf`` for no noise."""
    if t < 1:
        raise ContractError("t must be at least 1")
    rng = np.random.default_rng(seed)
    model = StateModel.build(jac, x0, state_model, state_sigma, load_sigma)
    X = model.sample(rng, t)
    clean = evaluate(jac, X)
    snr = _snr_vector(snr_db, jac.m, rng)
    sigma = snr_sigma(clean, snr)
    noisy = clean + sigma * rng.standard_normal(clean.shape)
    return MeasurementMatrix(
        Z=noisy, truth_A=noisy.copy(), states=X, sigma=sigma, snr_db=snr, seed=seed
    )


def measure(jac: DcJacobian, x, sigma, rng: np.random.Generator) -> np.ndarray:
    """One fresh noisy measurement vector (or rows of them) for states ``x``."""
    clean = evaluate(jac, x)
    return clean + np.asarray(sigma) * rng.standard_normal(clean.shape)


def corrupt(mat: MeasurementMatrix, spec: GrossErrorSpec) -> MeasurementMatrix:
    """Add sparse gross errors at uniformly chosen entries; the mask and values are kept."""
    if mat.truth_A is None:
        raise ContractError("corrupt needs a matrix with its pre-corruption truth recorded")
    t, m = mat.Z.shape
    count = spec.entries(t, m)
    rng = np.random.default_rng(spec.seed)
    base = mat.truth_A
    mask = np.zeros(t * m, dtype=bool)
    gross = np.zeros(t * m)
    if count:
        pos = rng.choice(t * m, size=count, replace=False)
        mask[pos] = True
        if spec.rule == "multiple_of_max":
            gross[pos] = spec.multiple * np.abs(base).max() * rng.choice([-1.0, 1.0], size=count)
        else:
            gross[pos] = -base.ravel()[pos]
    mask = mask.reshape(t, m)
    gross = gross.reshape(t, m)
    return replace(mat, Z=base + gross, gross_mask=mask, gross_values=gross)


def save_csv(Z, path) -> None:
    np.savetxt(path, np.asarray(Z), delimiter=",", fmt="%.17g")


def load_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
