"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .attack import attack_alm, attack_blind, attack_known_h, attack_random, draw_coefficients
from .casefile import load_case, sensor_count
from .dcmodel import build_jacobian, operating_point
from .errors import FdiError, ValidationError
from .estimator import NoiseModel, chi_square_threshold, detect, scrub
from .harness.campaigns import fresh_measurement, gross_spec, make_window, run_campaign, summary_text, trial_seed, write_outputs
from .harness.config import ExperimentConfig, load_config
from .measgen import corrupt, load_csv
from .recover import RpcaProblem, SOLVERS, export_trace, solve
from .subspace import fit_pca, reduced_basis, select_rank, svd_subspace


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(args, rows: list[tuple[str, object]]):
    if args.format == "csv":
        w = csv.writer(sys.stdout)
        w.writerow([k for k, _ in rows])
        w.writerow([v for _, v in rows])
    else:
        for k, v in rows:
            print(f"{k}={v}")


def _settings(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "case", None):
        changes["case"] = args.case
    for name in ("seed", "t", "trials", "workers", "gross_density"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if args.out:
        changes["out"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _system(cfg):
    grid = load_case(cfg.case)
    jac = build_jacobian(grid)
    return grid, jac, operating_point(grid, jac)


def cmd_case_info(args):
    grid = load_case(args.case)
    jac = build_jacobian(grid)
    _emit(args, [
        ("case", grid.name), ("buses", len(grid.buses)), ("branches", len(grid.live_branches)),
        ("m", sensor_count(grid)), ("n", jac.n), ("psi", jac.psi),
        ("tau95", round(chi_square_threshold(jac.psi, 0.95), 4)),
    ])


def cmd_estimate(args):
    cfg = _settings(args)
    _, jac, x0 = _system(cfg)
    s_data, s_fresh = trial_seed(cfg.seed, 0).spawn(2)
    mat = make_window(cfg, jac, x0, s_data)
    if args.z:
        z = load_csv(args.z).ravel()
    else:
        z = fresh_measurement(cfg, jac, x0, mat.sigma, np.random.default_rng(s_fresh))
    noise = NoiseModel(mat.sigma)
    if args.scrub:
        res = scrub(jac, z, noise, args.confidence, args.max_rounds)
        out = res.outcome
        extra = [("removed", " ".join(map(str, res.removed)) or "-"), ("stop", res.stop_reason)]
    else:
        out = detect(jac, z, noise, args.confidence)
        extra = []
    _emit(args, [
        ("wsse", round(out.wsse, 6)), ("tau", round(out.tau, 4)), ("psi", out.psi),
        ("verdict", out.verdict), ("max_normalized_residual", round(float(out.normalized_residuals.max()), 4)),
        *extra,
    ])
    if args.out:
        np.savetxt(args.out, out.estimate[None, :], delimiter=",", fmt="%.17g")


def cmd_attack(args):
    cfg = _settings(args)
    _, jac, x0 = _system(cfg)
    s_data, s_gross, s_fresh, s_c = trial_seed(cfg.seed, 0).spawn(4)
    mat = make_window(cfg, jac, x0, s_data)
    z = fresh_measurement(cfg, jac, x0, mat.sigma, np.random.default_rng(s_fresh))
    noise = NoiseModel(mat.sigma)
    rng = np.random.default_rng(s_c)
    window = corrupt(mat, gross_spec(cfg, s_gross)) if cfg.gross_density > 0 else mat
    if args.strategy == "known_h":
        vec = attack_known_h(jac, cfg.known_h_scale * rng.standard_normal(jac.n))
    elif args.strategy == "random":
        ref = attack_known_h(jac, cfg.known_h_scale * rng.standard_normal(jac.n))
        vec = attack_random(jac.m, float(np.linalg.norm(ref.a)), s_c)
    elif args.strategy == "pca_blind":
        model = fit_pca(window.Z, center=cfg.center)
        basis = reduced_basis(model, select_rank(model.eigenvalues, cfg.gamma, cfg.rank_rule), cfg.gamma)
        c = draw_coefficients(basis.rho, rng, cfg.coefficients, cfg.attack_scale, basis.eigenvalues)
        vec, _ = attack_blind(basis, c, z)
    elif args.strategy == "svd_blind":
        basis = svd_subspace(window.Z, jac.n, center=cfg.center)
        c = draw_coefficients(basis.rho, rng, cfg.coefficients, cfg.attack_scale, basis.eigenvalues)
        vec, _ = attack_blind(basis, c, z, "svd_blind")
    else:
        vec, _, _ = attack_alm(window.Z, cfg.gamma, rng, z, lam=cfg.alm_lambda, coefficients=cfg.coefficients,
                               scale=cfg.attack_scale, center=cfg.center, rank_rule=cfg.rank_rule,
                               max_iter=cfg.max_iter)
    before = detect(jac, z, noise)
    after = detect(jac, vec.apply(z), noise)
    _emit(args, [
        ("strategy", vec.strategy), ("rho", vec.basis_rank_used), ("gross_entries", window.gross_count),
        ("attack_norm", round(float(np.linalg.norm(vec.a)), 6)),
        ("wsse_before", round(before.wsse, 6)), ("wsse_after", round(after.wsse, 6)),
        ("tau", round(after.tau, 4)), ("verdict", after.verdict),
        ("state_shift", round(float(np.linalg.norm(after.estimate - before.estimate)), 6)),
    ])
    if args.out:
        np.savetxt(args.out, vec.a[None, :], delimiter=",", fmt="%.17g")


def cmd_recover(args):
    cfg = _settings(args)
    if args.matrix:
        Z = load_csv(args.matrix)
        gross = "-"
    else:
        _, jac, x0 = _system(cfg)
        s_data, s_gross = trial_seed(cfg.seed, 0).spawn(2)
        mat = corrupt(make_window(cfg, jac, x0, s_data), gross_spec(cfg, s_gross, density=args.density))
        Z, gross = mat.Z, mat.gross_count
    dec = solve(RpcaProblem(Z, lam=args.lam, max_iter=cfg.max_iter), args.solver)
    _emit(args, [
        ("solver", dec.solver), ("relative_error", f"{dec.relative_error:.3e}"),
        ("iterations", dec.iterations), ("converged", dec.converged), ("rank", dec.rank),
        ("nnz_e", int(np.count_nonzero(dec.E))), ("gross_entries", gross), ("seconds", round(dec.wall_time, 4)),
    ])
    if args.out:
        export_trace(dec, args.out)
    if not dec.converged:
        print(f"warning: {dec.solver} did not reach its tolerance", file=sys.stderr)


def cmd_campaign(args):
    cfg = _settings(args)
    res = run_campaign(cfg)
    paths = write_outputs(res, cfg.out)
    print(summary_text(res).split("config:")[0].rstrip())
    for p in paths:
        print(f"wrote {p}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON experiment configuration")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--format", choices=["text", "csv"], default="text")

    p = _Parser(prog="blindfdi", description="Blind false-data-injection attack lab for DC state estimation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("case-info", parents=[common], help="sensor and state counts of a case")
    s.add_argument("case")
    s.set_defaults(func=cmd_case_info)

    s = sub.add_parser("estimate", parents=[common], help="WLS estimate and chi-square test")
    s.add_argument("case", nargs="?")
    s.add_argument("--z", help="CSV file with one measurement vector (default: simulate one)")
    s.add_argument("--t", type=int, help="window length used to set sensor noise")
    s.add_argument("--confidence", type=float, default=0.95)
    s.add_argument("--scrub", action="store_true", help="remove bad data by largest normalized residual")
    s.add_argument("--max-rounds", type=int, default=10)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("attack", parents=[common], help="build one attack and test it")
    s.add_argument("case", nargs="?")
    s.add_argument("--strategy", choices=["known_h", "random", "pca_blind", "svd_blind", "alm_blind"], default="alm_blind")
    s.add_argument("--t", type=int)
    s.add_argument("--density", dest="gross_density", type=float, help="gross-error density of the training window")
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("recover", parents=[common], help="low-rank plus sparse decomposition")
    s.add_argument("case", nargs="?")
    s.add_argument("--solver", choices=sorted(SOLVERS), default="alm")
    s.add_argument("--density", type=float, default=0.01)
    s.add_argument("--lam", type=float)
    s.add_argument("--t", type=int)
    s.add_argument("--matrix", help="CSV matrix to decompose instead of a simulated window")
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("campaign", parents=[common], help="run a Monte Carlo campaign")
    s.add_argument("--trials", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_campaign)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FdiError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
