"""Experiment configuration: one flat table of settings, loaded from TOML or JSON."""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("pmis", "gross_error", "solver_bench")
ALL_STRATEGIES = ("none", "known_h", "random", "pca_blind", "svd_blind", "alm_blind")


@dataclass
class ExperimentConfig:
    kind: str = "pmis"
    case: str = "case14"
    t: int = 500
    snr_db: tuple[float, float] = (20.0, 35.0)
    state_model: str = "injection"
    state_sigma: float = 0.01  # rad, angle model
    load_sigma: float = 1.0  # per-unit injection spread, injection model
    trials: int = 1000
    seed: int = 0
    confidence: float = 0.95
    tau_grid: list[float] | None = None  # None: 200 points spanning both curve shoulders
    # attacks
    strategies: list[str] = field(default_factory=lambda: list(ALL_STRATEGIES))
    gamma: float = 0.995
    rank_rule: str = "cumulative"
    center: bool = True
    coefficients: str = "eigen"
    attack_scale: float = 1.0
    known_h_scale: float = 0.1  # rad per state for known-H attacks
    alm_lambda: float | None = None  # None: 1/sqrt(min(t, m))
    # gross errors (ALM training window in pmis runs, corrupted windows elsewhere)
    gross_density: float = 0.01
    gross_rule: str = "multiple_of_max"
    gross_multiple: float = 100.0
    single_gross_count: int = 1
    # estimator knowledge of sensor noise
    assumed_sigma_scale: float = 1.0
    # solver benchmark
    solvers: list[str] = field(default_factory=lambda: ["alm", "apg", "svt", "dual"])
    bench_cases: list[str] = field(default_factory=lambda: ["case14", "case30", "case57"])
    bench_densities: list[float] = field(default_factory=lambda: [0.01, 0.05])
    max_iter: int = 3000
    # execution
    workers: int = 1
    out: str = "results"

    def __post_init__(self):
        self.snr_db = tuple(self.snr_db) if isinstance(self.snr_db, (list, tuple)) else self.snr_db
        self.validate()

    def validate(self) -> None:
        from ..recover import SOLVERS  # local: keep config importable on its own

        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(self.kind in KINDS, f"kind must be one of {KINDS}")
        need(isinstance(self.t, int) and self.t >= 2, "t must be an integer >= 2")
        need(isinstance(self.trials, int) and self.trials >= 1, "trials must be an integer >= 1")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        need(0.0 < self.confidence < 1.0, "confidence must lie in (0, 1)")
        need(0.0 < self.gamma <= 1.0, "gamma must lie in (0, 1]")
        need(self.state_model in ("injection", "angle"), "state_model must be 'injection' or 'angle'")
        need(self.state_sigma >= 0 and self.load_sigma >= 0, "state spreads must be non-negative")
        if isinstance(self.snr_db, tuple):
            need(len(self.snr_db) == 2 and self.snr_db[0] <= self.snr_db[1], "snr_db range must be [low, high]")
        need(self.rank_rule in ("cumulative", "strict"), "rank_rule must be 'cumulative' or 'strict'")
        need(self.coefficients in ("eigen", "norm"), "coefficients must be 'eigen' or 'norm'")
        need(self.attack_scale > 0 and self.known_h_scale > 0, "attack scales must be positive")
        need(self.alm_lambda is None or self.alm_lambda > 0, "alm_lambda must be positive")
        need(0.0 <= self.gross_density <= 0.5, "gross_density must lie in [0, 0.5]")
        need(self.gross_rule in ("multiple_of_max", "missing_as_zero"), "unknown gross_rule")
        need(self.gross_multiple > 1, "gross_multiple must exceed 1")
        need(self.single_gross_count >= 1, "single_gross_count must be >= 1")
        need(self.assumed_sigma_scale > 0, "assumed_sigma_scale must be positive")
        unknown = set(self.strategies) - set(ALL_STRATEGIES)
        need(self.strategies and not unknown, f"unknown strategies {sorted(unknown)}")
        unknown = set(self.solvers) - set(SOLVERS)
        need(self.solvers and not unknown, f"unknown solvers {sorted(unknown)}")
        need(self.bench_cases, "bench_cases must not be empty")
        need(self.bench_densities and all(0 <= d <= 0.5 for d in self.bench_densities), "bench_densities must lie in [0, 0.5]")
        need(self.max_iter >= 1, "max_iter must be >= 1")
        need(self.workers >= 1, "workers must be >= 1")
        if self.tau_grid is not None:
            grid = list(self.tau_grid)
            need(len(grid) > 0, "tau_grid must not be empty")
            need(all(b > a for a, b in zip(grid, grid[1:])), "tau_grid must be strictly increasing")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["snr_db"] = list(self.snr_db) if isinstance(self.snr_db, tuple) else self.snr_db
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def from_mapping(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    data = dict(data)
    case = data.get("case")
    # a relative case path is resolved next to the config file when it exists there
    if base_dir is not None and case and (base_dir / case).exists():
        data["case"] = str(base_dir / case)
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        from importlib import resources

        bundled = resources.files("blindfdi") / "configs" / path.name
        if not bundled.is_file():
            raise ConfigError(f"config file not found: {path}")
        text, base = bundled.read_text(), None
    else:
        text, base = path.read_text(), path.parent
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table of settings")
    return from_mapping(data, base)
