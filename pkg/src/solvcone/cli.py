"""Command-line entry point: ``solvcone {cone,value,converge,repair-demo}``."""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bellman_solver as bs
from .cone_geometry import (
    EXACT_DUAL_MAX_DIM,
    ProjectionError,
    cone_from_costs,
    liquidation_value,
    transfer_rays,
    write_generators,
)
from .config import ConfigError, ExperimentConfig
from .lp import LPError
from .market_models import BudgetError, build_tree, sample_scenario
from .portfolio_dynamics import RepairError, Strategy, first_breach, repair_strategy, wealth

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_NUMERIC = 0, 2, 3, 4


def _fmt(v) -> str:
    return " ".join(f"{c:.10g}" for c in v)


def cmd_cone(cfg: ExperimentConfig, out: Path, args) -> int:
    cone = cone_from_costs(cfg.costs())
    print(f"dimension: {cone.d}")
    print(f"proper: {'yes' if cone.proper else 'no'}")
    if not cone.exact_dual:
        print(f"mode: LP-only (d > {EXACT_DUAL_MAX_DIM}); dual generators not enumerated, section sampled")
    print("generators:")
    for g in cone.generators:
        print("  " + _fmt(g))
    if cone.exact_dual:
        print("dual generators:")
        for w in cone.dual_generators:
            print("  " + _fmt(w))
    if cone.section is not None:
        print("dual section vertices" + ("" if cone.section.exact else " (sampled)") + ":")
        for w in cone.section.vertices:
            print("  " + _fmt(w))
    out.mkdir(parents=True, exist_ok=True)
    write_generators(cone, out / "generators.txt")
    if cone.exact_dual:
        write_generators(cone, out / "dual_generators.txt", dual=True)
    return EXIT_OK


def _grid(cfg: ExperimentConfig, cone, x):
    delta = cfg.get("grid.delta", "nan", float)
    return bs.ActionGrid.build(
        cone, x,
        delta=None if np.isnan(delta) else delta,
        kappa=cfg.get("grid.kappa", "40", int),
        max_rays=cfg.get("grid.max_rays", "0", int) or None,
    )


def cmd_value(cfg: ExperimentConfig, out: Path, args) -> int:
    method = args.method or cfg.get("value.method", "dp")
    if method not in ("enumerate", "dp", "both"):
        raise ConfigError("method must be enumerate, dp or both")
    costs = cfg.costs()
    cone = cone_from_costs(costs)
    U = cfg.utility()
    x = cfg.endowment()
    n = cfg.positive_int("value.n", "2")
    spec = cfg.model_spec(n)
    grid = _grid(cfg, cone, x)
    points = cfg.positive_int("grid.points", "41")
    radius = cfg.radius()
    reports = []
    if method in ("enumerate", "both"):
        reports.append(bs.enumerate_value(build_tree(spec, n), x, grid, U))
    if method in ("dp", "both"):
        tree = build_tree(spec, n, recombine=(method == "dp"))
        reports.append(bs.dp_value(tree, x, grid, U, points=points, radius=radius))
    if method == "both":
        gap = reports[0].value - reports[1].value
        for r in reports:
            r.gap = gap
    lam = float(costs.rates[0, 1])
    rows = [bs.result_row(r, n, x, U.gamma, lam, args.seed) for r in reports]
    out.mkdir(parents=True, exist_ok=True)
    bs.append_results(out / "results.csv", rows)
    for r in reports:
        extra = f" (interpolation bound {r.bound:.3g})" if r.method == "dp" else ""
        print(f"{r.method}: {r.value:.12g}{extra}")
    return EXIT_OK


def cmd_converge(cfg: ExperimentConfig, out: Path, args) -> int:
    costs = cfg.costs()
    cone = cone_from_costs(costs)
    U = cfg.utility()
    x = cfg.endowment()
    ns = cfg.ints("converge.ns", "2,4,8,16")
    if not ns or min(ns) < 1:
        raise ConfigError("converge.ns must list positive step counts")
    target = cfg.model_spec().with_(kind="gbm")
    grid = _grid(cfg, cone, x)
    workers = cfg.positive_int("run.workers", "1")
    kwargs = dict(points=cfg.positive_int("grid.points", "41"), radius=cfg.radius() if cfg.has("grid.radius") else 2.0,
                  mc_paths=cfg.get("converge.mc_paths", "0", int), mc_steps=cfg.positive_int("converge.mc_steps", "64"),
                  seed=args.seed)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rep = bs.convergence_study(target, ns, x, cone, U, grid, pool=pool, **kwargs)
    else:
        rep = bs.convergence_study(target, ns, x, cone, U, grid, **kwargs)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "convergence.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "value", "increment"])
        for k, (n, v) in enumerate(zip(rep.ns, rep.values)):
            w.writerow([n, f"{v:.17g}", "" if k == 0 else f"{rep.increments[k - 1]:.17g}"])
    lam = float(costs.rates[0, 1])
    rows = [bs.result_row(bs.ValueReport(v, "dp"), n, x, U.gamma, lam, args.seed) for n, v in zip(rep.ns, rep.values)]
    if rep.mc_lower is not None:
        rows.append(bs.result_row(rep.mc_lower, "gbm", x, U.gamma, lam, args.seed))
    results = out / "results.csv"
    if results.exists():
        results.unlink()
    bs.append_results(results, rows)
    print(rep.summary())
    return EXIT_OK


def cmd_repair_demo(cfg: ExperimentConfig, out: Path, args) -> int:
    costs = cfg.costs()
    cone = cone_from_costs(costs)
    x = cfg.endowment()
    m = cfg.positive_int("repair.m", "16")
    spec = cfg.model_spec()
    if spec.kind == "scaled_walk" and m % spec.n:
        spec = spec.with_(n=m)
    S = sample_scenario(spec, m, args.seed).S
    ell = liquidation_value(cone, x)
    margin = cfg.get("repair.margin", str(ell / 10.0), float)
    overdraw = cfg.get("repair.overdraw", "1.0", float)
    if overdraw < 0 or margin < 0:
        raise ConfigError("repair.overdraw and repair.margin must be nonnegative")
    # scripted churn: buy then sell back asset 2, overdraw·ℓ(x) per trade; costs erode wealth
    rays = transfer_rays(costs)
    buy = next(r for r in rays if r[0] > 0 and r[1] < 0)
    sell = next(r for r in rays if r[0] < 0 and r[1] > 0)
    jumps = np.zeros((m + 1, cone.d))
    jumps[1::2] = -overdraw * ell * buy
    jumps[2::2] = -overdraw * ell * sell / (1.0 + costs.rates[1, 0])
    C = Strategy.from_jumps(cone, jumps, spec.T)
    tau = first_breach(x, C, S, margin)
    D = repair_strategy(x, C, S, cone, margin)
    out.mkdir(parents=True, exist_ok=True)
    wealth(x, C, S).V.write_csv(out / "wealth_before.csv")
    wealth(x, D, S).V.write_csv(out / "wealth_after.csv")
    (out / "tau.txt").write_text(("none" if tau is None else f"{tau} {S.times[tau]:.17g}") + "\n")
    print("repair time: " + ("none (strategy keeps the margin)" if tau is None else f"node {tau}, t = {S.times[tau]:.6g}"))
    return EXIT_OK


COMMANDS = {"cone": cmd_cone, "value": cmd_value, "converge": cmd_converge, "repair-demo": cmd_repair_demo}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="solvcone", description="Solvency cones, price systems and Bellman values.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment config (INI sections, dotted keys)")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides run.seed)")
    p.add_argument("--out", default=None, help="output directory (overrides run.out)")
    p.add_argument("--method", choices=["enumerate", "dp", "both"], default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.read(args.config)
        if args.seed is None:
            args.seed = cfg.get("run.seed", "0", int)
        out = Path(args.out or cfg.get("run.out", "out"))
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (LPError, ProjectionError, RepairError, AssertionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
