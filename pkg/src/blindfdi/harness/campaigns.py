"""Monte Carlo campaigns: misdetection curves, gross-error study, solver benchmark.

Trial k draws every random quantity from SeedSequence(seed, spawn_key=(k,)),
so any trial can be replayed alone and results do not depend on worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..attack import attack_alm, attack_blind, attack_known_h, attack_random, draw_coefficients
from ..casefile import load_case
from ..dcmodel import build_jacobian, operating_point
from ..errors import FdiError
from ..estimator import NoiseModel, chi_square_threshold, wls_estimate, wsse
from ..measgen import GrossErrorSpec, StateModel, corrupt, generate, measure
from ..recover import RpcaProblem, solve
from ..subspace import fit_pca, reduced_basis, select_rank, svd_subspace
from .config import ExperimentConfig

log = logging.getLogger(__name__)


@dataclass
class CampaignResult:
    kind: str
    config: ExperimentConfig
    records: list[dict] = field(default_factory=list)
    curves: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def values(self, key, **where) -> np.ndarray:
        rows = [r for r in self.records if all(r.get(k) == v for k, v in where.items())]
        return np.array([r[key] for r in rows], dtype=float)

    def pmis_at(self, strategy: str, tau: float) -> float:
        w = self.values("wsse", strategy=strategy)
        return float(np.mean(w < tau)) if w.size else float("nan")


def trial_seed(master: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(trial,))


@lru_cache(maxsize=8)
def _system(case: str):
    grid = load_case(case)
    jac = build_jacobian(grid)
    return grid, jac, operating_point(grid, jac)


def default_tau_grid(psi: int, points: int = 200) -> np.ndarray:
    lo = 0.5 * chi_square_threshold(psi, 0.5)
    hi = 2.0 * chi_square_threshold(psi, 0.99)
    return np.linspace(lo, hi, points)


def make_window(cfg: ExperimentConfig, jac, x0, seed):
    return generate(
        jac, x0, cfg.t, cfg.state_sigma, cfg.snr_db, seed,
        state_model=cfg.state_model, load_sigma=cfg.load_sigma,
    )


def gross_spec(cfg: ExperimentConfig, seed, density=None, count=None):
    return GrossErrorSpec(
        density=cfg.gross_density if density is None else density,
        rule=cfg.gross_rule, multiple=cfg.gross_multiple, count=count, seed=seed,
    )


def fresh_measurement(cfg, jac, x0, sigma, rng):
    model = StateModel.build(jac, x0, cfg.state_model, cfg.state_sigma, cfg.load_sigma)
    return measure(jac, model.sample(rng), sigma, rng)


def _pca_attack(cfg, Z, z, rng, strategy="pca_blind"):
    model = fit_pca(Z, center=cfg.center)
    rho = select_rank(model.eigenvalues, cfg.gamma, cfg.rank_rule)
    basis = reduced_basis(model, rho, cfg.gamma)
    c = draw_coefficients(rho, rng, cfg.coefficients, cfg.attack_scale, basis.eigenvalues)
    return attack_blind(basis, c, z, strategy)


def _pmis_trial(cfg: ExperimentConfig, trial: int):
    ss = trial_seed(cfg.seed, trial)
    s_data, s_gross, s_fresh, s_known, s_rand, s_pca, s_svd, s_alm = ss.spawn(8)
    _, jac, x0 = _system(cfg.case)
    mat = make_window(cfg, jac, x0, s_data)
    z = fresh_measurement(cfg, jac, x0, mat.sigma, np.random.default_rng(s_fresh))
    noise = NoiseModel(mat.sigma * cfg.assumed_sigma_scale)
    x_ref = wls_estimate(jac, z, noise)

    known = attack_known_h(jac, cfg.known_h_scale * np.random.default_rng(s_known).standard_normal(jac.n))
    out, fails = [], []
    for strategy in cfg.strategies:
        try:
            if strategy == "none":
                z_att, rho, a = z, 0, np.zeros(jac.m)
            elif strategy == "known_h":
                z_att, rho, a = known.apply(z), jac.n, known.a
            elif strategy == "random":
                vec = attack_random(jac.m, float(np.linalg.norm(known.a)), s_rand)
                z_att, rho, a = vec.apply(z), 0, vec.a
            elif strategy == "pca_blind":
                vec, z_att = _pca_attack(cfg, mat.Z, z, np.random.default_rng(s_pca))
                rho, a = vec.basis_rank_used, vec.a
            elif strategy == "svd_blind":
                basis = svd_subspace(mat.Z, jac.n, center=cfg.center)
                c = draw_coefficients(jac.n, np.random.default_rng(s_svd), cfg.coefficients, cfg.attack_scale, basis.eigenvalues)
                vec, z_att = attack_blind(basis, c, z, "svd_blind")
                rho, a = jac.n, vec.a
            else:  # alm_blind, trained on a window with gross errors
                window = corrupt(mat, gross_spec(cfg, s_gross)) if cfg.gross_density > 0 else mat
                vec, z_att, _ = attack_alm(
                    window.Z, cfg.gamma, np.random.default_rng(s_alm), z,
                    lam=cfg.alm_lambda, coefficients=cfg.coefficients, scale=cfg.attack_scale,
                    center=cfg.center, rank_rule=cfg.rank_rule, max_iter=cfg.max_iter,
                )
                rho, a = vec.basis_rank_used, vec.a
        except FdiError as exc:
            fails.append({"trial": trial, "strategy": strategy, "error": f"{type(exc).__name__}: {exc}"})
            continue
        shift = np.linalg.norm(wls_estimate(jac, z_att, noise) - x_ref)
        out.append({
            "seed": cfg.seed, "trial": trial, "strategy": strategy,
            "wsse": wsse(jac, z_att, noise), "rho": rho,
            "attack_norm": float(np.linalg.norm(a)), "state_shift": float(shift),
        })
    return out, fails


def _gross_trial(cfg: ExperimentConfig, trial: int):
    ss = trial_seed(cfg.seed, trial)
    s_data, s_single, s_dense, s_fresh, s_pca, s_ctrl, s_alm = ss.spawn(7)
    _, jac, x0 = _system(cfg.case)
    mat = make_window(cfg, jac, x0, s_data)
    z = fresh_measurement(cfg, jac, x0, mat.sigma, np.random.default_rng(s_fresh))
    noise = NoiseModel(mat.sigma * cfg.assumed_sigma_scale)
    out, fails = [], []

    def record(scenario, z_att, rho):
        out.append({"seed": cfg.seed, "trial": trial, "strategy": scenario,
                    "wsse": wsse(jac, z_att, noise), "rho": rho})

    record("none", z, 0)
    single = corrupt(mat, gross_spec(cfg, s_single, count=cfg.single_gross_count))
    vec, z_att = _pca_attack(cfg, single.Z, z, np.random.default_rng(s_pca))
    record("pca_single_gross", z_att, vec.basis_rank_used)
    vec, z_att = _pca_attack(cfg, mat.Z, z, np.random.default_rng(s_ctrl))
    record("pca_clean", z_att, vec.basis_rank_used)
    dense = corrupt(mat, gross_spec(cfg, s_dense))
    try:
        vec, z_att, _ = attack_alm(
            dense.Z, cfg.gamma, np.random.default_rng(s_alm), z,
            lam=cfg.alm_lambda, coefficients=cfg.coefficients, scale=cfg.attack_scale,
            center=cfg.center, rank_rule=cfg.rank_rule, max_iter=cfg.max_iter,
        )
        record("alm_gross", z_att, vec.basis_rank_used)
    except FdiError as exc:
        fails.append({"trial": trial, "strategy": "alm_gross", "error": f"{type(exc).__name__}: {exc}"})
    return out, fails


def _bench_trial(cfg: ExperimentConfig, trial: int):
    out = []
    for ci, case in enumerate(cfg.bench_cases):
        _, jac, x0 = _system(case)
        for di, density in enumerate(cfg.bench_densities):
            ss = np.random.SeedSequence(cfg.seed, spawn_key=(trial, ci, di))
            s_data, s_gross = ss.spawn(2)
            mat = corrupt(make_window(cfg, jac, x0, s_data), gross_spec(cfg, s_gross, density=density))
            for solver in cfg.solvers:
                dec = solve(RpcaProblem(mat.Z, max_iter=cfg.max_iter), solver)
                out.append({
                    "seed": cfg.seed, "trial": trial, "solver": solver, "case": case,
                    "density": density, "r_e": dec.relative_error, "seconds": dec.wall_time,
                    "converged": dec.converged, "iterations": dec.iterations,
                })
    return out, []


_TRIALS = {"pmis": _pmis_trial, "gross_error": _gross_trial, "solver_bench": _bench_trial}


def _run(cfg: ExperimentConfig, kind: str) -> CampaignResult:
    fn = _TRIALS[kind]
    ids = range(cfg.trials)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(fn, [cfg] * cfg.trials, ids, chunksize=max(1, cfg.trials // (4 * cfg.workers))))
    else:
        results = [fn(cfg, k) for k in ids]
    res = CampaignResult(kind, cfg)
    for rows, fails in results:  # already in trial order
        res.records.extend(rows)
        res.failures.extend(fails)
    for f in res.failures:
        log.warning("trial %(trial)s %(strategy)s excluded: %(error)s", f)
    res.metadata = _metadata(cfg)
    return res


def run_pmis_campaign(cfg: ExperimentConfig) -> CampaignResult:
    """WSSE of every strategy per trial, and P_mis(tau) = share of trials with WSSE < tau."""
    res = _run(cfg, "pmis")
    _, jac, _ = _system(cfg.case)
    grid = np.asarray(cfg.tau_grid, dtype=float) if cfg.tau_grid is not None else default_tau_grid(jac.psi)
    for strategy in cfg.strategies:
        w = res.values("wsse", strategy=strategy)
        p = (w[None, :] < grid[:, None]).mean(axis=1) if w.size else np.full(grid.size, np.nan)
        res.curves[strategy] = (grid, p)
    res.metadata["psi"] = jac.psi
    res.metadata["tau"] = chi_square_threshold(jac.psi, cfg.confidence)
    return res


def run_gross_error_study(cfg: ExperimentConfig) -> CampaignResult:
    """PCA attacks from windows with a single gross error, ALM attacks from 1%-style corruption."""
    res = _run(cfg, "gross_error")
    _, jac, _ = _system(cfg.case)
    tau = chi_square_threshold(jac.psi, cfg.confidence)
    res.metadata["tau"] = tau
    for scenario in ("none", "pca_single_gross", "pca_clean", "alm_gross"):
        w = res.values("wsse", strategy=scenario)
        res.metadata[f"{scenario}_detected"] = int(np.sum(w >= tau))
        res.metadata[f"{scenario}_trials"] = int(w.size)
    return res


def run_solver_benchmark(cfg: ExperimentConfig) -> CampaignResult:
    """Relative error and wall time of each solver on freshly corrupted windows."""
    return _run(cfg, "solver_bench")


RUNNERS = {"pmis": run_pmis_campaign, "gross_error": run_gross_error_study, "solver_bench": run_solver_benchmark}


def run_campaign(cfg: ExperimentConfig) -> CampaignResult:
    return RUNNERS[cfg.kind](cfg)


def _git_hash() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _metadata(cfg: ExperimentConfig) -> dict:
    return {"git": _git_hash(), "seed": cfg.seed, "trials": cfg.trials, "numpy": np.__version__}


def write_outputs(res: CampaignResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if res.kind == "solver_bench":
        path = out / "solver_bench.csv"
        keys = ["seed", "trial", "solver", "case", "density", "r_e", "seconds", "converged", "iterations"]
        _write_rows(path, keys, res.records)
        written.append(path)
    else:
        path = out / "trials.csv"
        keys = list(res.records[0]) if res.records else ["seed", "trial", "strategy", "wsse"]
        _write_rows(path, keys, res.records)
        written.append(path)
    if res.curves:
        path = out / "pmis.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "strategy", "tau", "p_mis", "trials"])
            for strategy, (grid, p) in res.curves.items():
                n = res.values("wsse", strategy=strategy).size
                for tau, value in zip(grid, p):
                    w.writerow([res.config.seed, strategy, repr(float(tau)), repr(float(value)), n])
        written.append(path)
    path = out / "summary.txt"
    path.write_text(summary_text(res))
    written.append(path)
    return written


def _write_rows(path, keys, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def summary_text(res: CampaignResult) -> str:
    lines = [f"campaign: {res.kind}"]
    lines += [f"{k}: {v}" for k, v in res.metadata.items()]
    lines.append(f"excluded trials: {len(res.failures)}")
    if res.kind == "pmis":
        tau = res.metadata["tau"]
        for strategy in res.curves:
            lines.append(f"P_mis({strategy}, tau={tau:.2f}) = {res.pmis_at(strategy, tau):.3f}")
    elif res.kind == "solver_bench":
        cfg = res.config
        for case in cfg.bench_cases:
            for d in cfg.bench_densities:
                for s in cfg.solvers:
                    sel = dict(solver=s, case=case, density=d)
                    re, sec = res.values("r_e", **sel), res.values("seconds", **sel)
                    lines.append(f"{case} density={d} {s}: mean R_E={re.mean():.3e} median time={np.median(sec):.3f}s")
    lines.append("config:")
    lines.append(json.dumps(res.config.to_dict(), indent=2, sort_keys=True))
    return "\n".join(lines) + "\n"
