"""Command-line front end.

    irs-skg correlation --config run.cfg --out results/
    irs-skg rate        --config run.cfg --regime eps
    irs-skg validate    --blocks 20000
    irs-skg optimize    --config run.cfg

Each command writes ``<command>.csv`` into ``--out``.  The file starts with
``#`` lines recording the package version, the SHA-256 of the effective
configuration and the seed; the body depends only on those, so reruns are
byte-identical.

Exit codes: 0 success, 1 a validation check failed, 2 configuration error,
3 infeasible plan or optimization problem.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, defaults, load_config
from .optimizer import InfeasibleProblemError, OptProblem, exhaustive_search, scp_solve
from .oracle import empirical_correlation
from .rate import InvalidCovarianceError, skg_rate
from .scenario import InfeasiblePlanError, ProbePlan
from .statistics import temporal_correlation
from .validation import SuiteSettings, run_suite

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path: Path, command: str, cfg: RunConfig, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# irs_skg {__version__} {command}\n")
        fh.write(f"# config_sha256 = {cfg.digest()}\n")
        fh.write(f"# seed = {cfg['seed']}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def cmd_correlation(cfg: RunConfig) -> tuple[list[str], list[list]]:
    scn = cfg.scenario()
    plan = cfg.plan()
    if not plan.is_feasible or plan.rounds < 2:
        raise InfeasiblePlanError(
            f"correlation needs a feasible plan with at least two rounds; t_d={plan.t_d}, t_s={plan.t_s} gives {plan.rounds}"
        )
    header = ["regime", "with_direct", "N", "T_d", "T_s", "rho_closed", "rho_mc", "se", "pass"]
    rows = []
    k = 0
    for regime in cfg.regimes:
        for with_direct in (True, False):
            k += 1
            closed = temporal_correlation(scn, plan, regime, with_direct, cross_pairing=cfg["cross_pairing"]).value
            seed = int(np.random.SeedSequence([cfg["seed"], k]).generate_state(1)[0])
            rep = empirical_correlation(
                scn, plan, regime, with_direct, cfg["blocks"], seed, batches=cfg["batches"]
            ).check(closed, cfg["n_se"], abs_floor=0.02)
            rows.append(
                [regime.value, with_direct, scn.n_elements, plan.t_d, plan.t_s, closed, rep.estimate, rep.standard_error, rep.passed]
            )
    return header, rows


def _sweep_values(cfg: RunConfig) -> list[tuple[float, float]]:
    if cfg["sweep"] == "none":
        return [(cfg["t_d"], cfg["t_s"])]
    n = cfg["sweep_points"]
    if n < 0:
        raise ConfigError("sweep_points must be non-negative")
    values = np.linspace(cfg["sweep_start"], cfg["sweep_stop"], n) if n else np.array([])
    if cfg["sweep"] == "t_d":
        return [(float(v), cfg["t_s"]) for v in values]
    return [(cfg["t_d"], float(v)) for v in values]


def cmd_rate(cfg: RunConfig) -> tuple[list[str], list[list]]:
    scn = cfg.scenario()
    header = ["T_d", "T_s", "regime", "direct_term", "reflected_term", "total", "feasible"]
    rows = []
    for t_d, t_s in _sweep_values(cfg):
        try:
            plan = ProbePlan(cfg["t_p"], t_d, t_s)
        except ValueError as exc:
            raise ConfigError(f"invalid probing plan: {exc}") from None
        for regime in cfg.regimes:
            try:
                r = skg_rate(scn, plan, regime, cfg["cross_pairing"])
                terms = (r.direct_term, r.reflected_term, r.total)
            except InvalidCovarianceError:
                terms = (math.nan, math.nan, math.nan)
            rows.append([t_d, t_s, regime.value, *terms, plan.is_feasible])
    return header, rows


def suite_settings(cfg: RunConfig, blocks: Optional[int] = None) -> SuiteSettings:
    return SuiteSettings(
        scenario=cfg.scenario(),
        plan=cfg.plan(),
        seed=cfg["seed"],
        corr_blocks=blocks or cfg["blocks"],
        quad_blocks=blocks or cfg["validate_quad_blocks"],
        mi_blocks=blocks or cfg["validate_mi_blocks"],
        gauss_draws=blocks or cfg["validate_gauss_draws"],
        mi_power_dbm=cfg["validate_mi_power_dbm"],
        batches=cfg["batches"],
        n_se=cfg["n_se"],
        power_sweep_dbm=cfg["power_sweep_dbm"],
        rho_max=cfg["rho_max"],
        max_iter=cfg["max_iter"],
        es_step=cfg["es_step"],
    )


def cmd_validate(cfg: RunConfig, blocks: Optional[int] = None, only: Optional[list[str]] = None):
    plan = cfg.plan()
    if not plan.is_feasible or plan.rounds < 2:
        raise InfeasiblePlanError("validation needs a feasible plan with at least two rounds")
    results = run_suite(suite_settings(cfg, blocks), only)
    header = ["criterion", "check", "statistic", "reference", "tolerance", "pass", "informational"]
    rows = [[r.criterion, r.check, r.statistic, r.reference, r.tolerance, r.passed, r.informational] for r in results]
    failed = [r for r in results if not r.passed and not r.informational]
    return header, rows, failed


def cmd_optimize(cfg: RunConfig) -> tuple[list[str], list[list], int]:
    header = [
        "P_tx_dbm", "regime", "rate_scp", "rate_es", "T_d_scp", "T_s_scp", "T_d_es", "T_s_es",
        "iterations", "converged", "feasible",
    ]
    rows = []
    infeasible = 0
    for dbm in cfg["power_sweep_dbm"]:
        scn = cfg.scenario(power_dbm=dbm)
        for regime in cfg.regimes:
            try:
                prob = OptProblem(scn, regime, cfg["t_p"], cfg["rho_max"], cfg["max_iter"], cfg["cross_pairing"])
            except ValueError as exc:
                raise ConfigError(f"invalid optimization problem: {exc}") from None
            nan = math.nan
            try:
                scp = scp_solve(
                    prob, trust_radius=cfg["trust_radius"], objective_curvature=cfg["objective_curvature"]
                )
                scp_vals = [scp.rate, scp.t_d, scp.t_s, scp.iterations, scp.converged]
            except InfeasibleProblemError:
                scp_vals = [nan, nan, nan, prob.max_iter, False]
            try:
                es = exhaustive_search(prob, cfg["es_step"])
                es_vals = [es.rate, es.t_d, es.t_s]
            except InfeasibleProblemError:
                es_vals = [nan, nan, nan]
            feasible = not math.isnan(scp_vals[0])
            infeasible += not feasible
            rows.append(
                [dbm, prob.regime.value, scp_vals[0], es_vals[0], scp_vals[1], scp_vals[2], es_vals[1], es_vals[2],
                 scp_vals[3], scp_vals[4], feasible]
            )
    return header, rows, infeasible


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value run configuration (defaults if omitted)")
    common.add_argument("--seed", type=int, help="root seed, overrides the config")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current)")
    common.add_argument("--regime", choices=("eps", "rps"), help="restrict to one phase regime")
    common.add_argument("--blocks", type=int, help="Monte Carlo blocks, overrides the config")

    parser = argparse.ArgumentParser(prog="irs-skg", description="IRS-assisted secret key generation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("correlation", parents=[common], help="closed-form vs Monte Carlo round-to-round correlation")
    sub.add_parser("rate", parents=[common], help="key rate at one plan or along a sweep")
    v = sub.add_parser("validate", parents=[common], help="run the acceptance checks")
    v.add_argument("--criteria", help="comma-separated subset, e.g. A1,A4")
    sub.add_parser("optimize", parents=[common], help="SCP and exhaustive search over the power sweep")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else defaults()
        cfg = cfg.with_overrides(
            seed=None if args.seed is None else str(args.seed),
            regime=args.regime,
        )
        if args.blocks is not None:
            if args.blocks < 1:
                raise ConfigError("--blocks must be positive")
            cfg = cfg.with_overrides(blocks=str(args.blocks))
        out = Path(args.out) / f"{args.command}.csv"
        code = EXIT_OK
        if args.command == "correlation":
            header, rows = cmd_correlation(cfg)
        elif args.command == "rate":
            header, rows = cmd_rate(cfg)
        elif args.command == "validate":
            only = None
            if args.criteria:
                only = [c.strip().upper() for c in args.criteria.split(",") if c.strip()]
                from .validation import SUITE

                unknown = [c for c in only if c not in SUITE]
                if unknown:
                    raise ConfigError(f"unknown criteria: {', '.join(unknown)}")
            header, rows, failed = cmd_validate(cfg, args.blocks, only)
            for f in failed:
                print(f"FAIL {f.criterion} {f.check}: {f.statistic:.6g} (tolerance {f.tolerance:g})", file=sys.stderr)
            code = EXIT_VALIDATION if failed else EXIT_OK
        else:
            header, rows, infeasible = cmd_optimize(cfg)
            if infeasible:
                print(f"{infeasible} optimization point(s) infeasible", file=sys.stderr)
                code = EXIT_INFEASIBLE
        write_table(out, args.command, cfg, header, rows)
        print(out)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasiblePlanError, InfeasibleProblemError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
