"""Command-line entry point: generate, optimize, validate, stress, stats.

Exit codes: 0 solved/ok, 2 unsolved or violations found, 3 invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .catalog import ModuleCatalog
from .config import SCOPES, load_config
from .ga import run
from .meter import Counters
from .solutions import SolutionRecord
from .stats import (BOOTSTRAP_SAMPLES, convergence, convergence_csv,
                    correlate, correlate_csv, load_log, relative_performance,
                    solution_metrics)
from .stress import outcome_csv, perturb, repair
from .task import Task, solution_cost
from .taskgen import FAMILIES, FamilySpec, generate, write_tasks

OK, UNSOLVED, INVALID = 0, 2, 3


def _load_catalog(path) -> ModuleCatalog:
    return ModuleCatalog.load(path) if path else ModuleCatalog.default()


def _cmd_generate(args) -> int:
    try:
        spec = FamilySpec(args.family, count=args.count, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID
    tasks = generate(spec)
    manifest = write_tasks(tasks, Path(args.out), spec)
    print(f"wrote {len(tasks)} {args.family} tasks to {args.out} "
          f"(manifest {manifest.name})")
    return OK


def _cmd_optimize(args) -> int:
    try:
        task = Task.load(args.task)
        catalog = _load_catalog(args.modules)
        config = load_config(args.scope, args.config)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID
    if task.availability:
        catalog = catalog.with_availability(task.availability)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "log.jsonl"
    result = run(task, catalog, config, budget_seconds=args.budget,
                 seed=args.seed, workers=args.workers, log_path=log_path)
    record = None
    if result.best_evaluation is not None and result.best_evaluation.robot is not None:
        record = SolutionRecord.from_evaluation(
            result.best_evaluation, scope=args.scope, seed=args.seed,
            task_file=str(args.task), meter_seconds=result.meter_seconds)
        record.save(out_dir / "solution.json")
    solved = result.solved
    cycle = result.best_cost.cycle_time if result.best_cost else None
    print(f"scope={args.scope} seed={args.seed} generations={result.generations} "
          f"meter={result.meter_seconds:.1f}s solved={solved} "
          f"cycle_time={'-' if cycle is None else f'{cycle:.3f}s'}")
    return OK if solved else UNSOLVED


def _cmd_validate(args) -> int:
    try:
        task = Task.load(args.task)
        record = SolutionRecord.load(args.solution)
        catalog = _load_catalog(args.modules)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID
    if record.trajectory is None:
        print("solution carries no trajectory")
        return UNSOLVED
    robot = record.robot(catalog)
    traj = record.trajectory
    audit = solution_cost(task, robot, traj.times, traj.q, traj.qd, traj.qdd)
    print(f"violated_constraints={audit.violated_constraints} "
          f"unmet_goals={audit.unmet_goals} cost={audit.cost_value:.6g}")
    if audit.violations:
        print("violations: " + ", ".join(audit.violations))
    return OK if audit.ok else UNSOLVED


def _parse_tilt(text: str) -> float:
    text = text.strip().lower()
    if text.endswith("deg"):
        return math.radians(float(text[:-3]))
    if text.endswith("rad"):
        return float(text[:-3])
    return float(text)


def _cmd_stress(args) -> int:
    try:
        task = Task.load(args.task)
        record = SolutionRecord.load(args.solution)
        catalog = _load_catalog(args.modules)
        config = load_config(args.scope, args.config)
        tilt = _parse_tilt(args.tilt)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID
    if not record.solved or record.trajectory is None:
        print("solution is not a valid solved trajectory", file=sys.stderr)
        return INVALID
    variants = perturb(task, max_shift=args.shift, max_tilt=tilt,
                       n_variants=args.variants, seed=args.seed)
    rows = []
    n_ok = 0
    for v_idx, variant in enumerate(variants):
        rng = np.random.default_rng(np.random.SeedSequence(args.seed,
                                                           spawn_key=(11, v_idx)))
        report = repair(record, variant, catalog, config, rng=rng)
        n_ok += report.ok
        rows.append({"task": Path(args.task).name, "variant": v_idx,
                     "outcome": report.outcome,
                     "stages_tried": report.stages_tried,
                     "cycle_time": None if report.trajectory is None
                     else report.trajectory.duration})
    csv = outcome_csv(rows)
    if args.out:
        Path(args.out).write_text(csv)
    else:
        print(csv, end="")
    print(f"repaired {n_ok}/{len(variants)} variants "
          f"({100.0 * n_ok / len(variants):.1f}%)", file=sys.stderr)
    return OK


def _expand(patterns):
    import glob as globlib
    out = []
    for pattern in patterns:
        matches = sorted(globlib.glob(pattern, recursive=True))
        out.extend(Path(m) for m in (matches or [pattern]))
    return [p for p in out if p.is_file()]


def _collect_logs(patterns):
    return {str(p): load_log(p) for p in _expand(patterns)}


def _cmd_stats(args) -> int:
    if args.stats_cmd == "convergence":
        logs = _collect_logs(args.logs)
        if not logs:
            print("no logs found", file=sys.stderr)
            return INVALID
        horizon = max((rec[-1]["t"] for rec in logs.values() if rec), default=0)
        grid = np.arange(0.0, horizon + args.grid_step, args.grid_step)
        rows = convergence(list(logs.values()), grid, seed=args.seed)
        csv = convergence_csv(rows)
        if args.out:
            Path(args.out).write_text(csv)
        else:
            print(csv, end="")
        return OK
    if args.stats_cmd == "compare":
        logs_a = {p.parent.name: load_log(p)
                  for p in sorted(Path(args.a).glob("**/log.jsonl"))}
        logs_b = {p.parent.name: load_log(p)
                  for p in sorted(Path(args.b).glob("**/log.jsonl"))}
        try:
            rel = relative_performance(logs_a, logs_b, seed=args.seed)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return INVALID
        print(json.dumps(rel.to_json(), indent=1, sort_keys=True))
        return OK
    if args.stats_cmd == "correlate":
        catalog = _load_catalog(args.modules)
        rows = []
        for path in _expand(args.solutions):
            record = SolutionRecord.load(path)
            if not record.solved or record.trajectory is None:
                continue
            if not record.task_file or not Path(record.task_file).is_file():
                continue
            task = Task.load(record.task_file)
            rows.append(solution_metrics(record, catalog, task))
        if len(rows) < 3:
            print("need at least 3 solved solutions", file=sys.stderr)
            return INVALID
        csv = correlate_csv(correlate(rows))
        if args.out:
            Path(args.out).write_text(csv)
        else:
            print(csv, end="")
        return OK
    return INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modco",
                                     description="modular robot co-design toolkit")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("generate", help="write benchmark task files")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("optimize", help="run the co-design optimizer")
    p.add_argument("--task", required=True)
    p.add_argument("--modules", default=None)
    p.add_argument("--scope", required=True, choices=SCOPES)
    p.add_argument("--budget", type=float, required=True,
                   help="budget in metered seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("validate", help="independent re-check of a solution")
    p.add_argument("--solution", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--modules", default=None)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("stress", help="perturb goals and repair the solution")
    p.add_argument("--solution", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--modules", default=None)
    p.add_argument("--variants", type=int, default=56)
    p.add_argument("--shift", type=float, default=0.04)
    p.add_argument("--tilt", default="5deg")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scope", default="mb", choices=SCOPES)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stress)

    p = sub.add_parser("stats", help="post-hoc analysis of run logs")
    stats_sub = p.add_subparsers(dest="stats_cmd", required=True)
    pc = stats_sub.add_parser("convergence")
    pc.add_argument("--logs", nargs="+", required=True)
    pc.add_argument("--grid-step", type=float, default=10.0)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", default=None)
    pc.set_defaults(func=_cmd_stats)
    pp = stats_sub.add_parser("compare")
    pp.add_argument("--a", required=True)
    pp.add_argument("--b", required=True)
    pp.add_argument("--seed", type=int, default=0)
    pp.set_defaults(func=_cmd_stats)
    pr = stats_sub.add_parser("correlate")
    pr.add_argument("--solutions", nargs="+", required=True)
    pr.add_argument("--modules", default=None)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=_cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
