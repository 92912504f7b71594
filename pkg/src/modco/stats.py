"""Post-hoc analysis of run logs: convergence curves, paired comparisons and
cost correlations. Emits spreadsheet-ready rows, no plotting dependencies."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats as sps

J_FAIL = 50.0           # failure value for runs without a valid solution
BOOTSTRAP_SAMPLES = 10_000


def load_log(path: Union[str, Path]) -> List[dict]:
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def best_cost_at(records: Sequence[dict], t: float) -> float:
    """Best feasible cycle time achieved up to meter time t, else J_FAIL."""
    best = J_FAIL
    for r in records:
        if r["t"] > t:
            break
        if r.get("solved") and r.get("cycle_time") is not None:
            best = min(best, float(r["cycle_time"]))
    return best


def solved_by(records: Sequence[dict], t: float) -> bool:
    return any(r.get("solved") and r["t"] <= t for r in records)


def _bootstrap_ci(values: np.ndarray, statistic, n_boot: int, rng,
                  level: float = 0.95) -> Tuple[float, float]:
    n = len(values)
    idx = rng.integers(0, n, size=(n_boot, n))
    samples = statistic(values[idx])
    lo, hi = np.percentile(samples, [(1 - level) / 2 * 100,
                                     (1 + level) / 2 * 100])
    return float(lo), float(hi)


def convergence(run_logs: Sequence[Sequence[dict]], grid: Sequence[float],
                n_boot: int = BOOTSTRAP_SAMPLES, seed: int = 0) -> List[dict]:
    """Mean best-cost and success-rate time series with 95% bootstrap bands."""
    rng = np.random.default_rng(seed)
    rows = []
    for t in grid:
        costs = np.array([best_cost_at(log, t) for log in run_logs])
        succ = np.array([solved_by(log, t) for log in run_logs], dtype=float)
        c_lo, c_hi = _bootstrap_ci(costs, lambda s: s.mean(axis=1), n_boot, rng)
        s_lo, s_hi = _bootstrap_ci(succ, lambda s: s.mean(axis=1), n_boot, rng)
        rows.append({"t": float(t), "mean_cost": float(costs.mean()),
                     "cost_lo": c_lo, "cost_hi": c_hi,
                     "success_rate": float(succ.mean()),
                     "success_lo": s_lo, "success_hi": s_hi})
    return rows


def convergence_csv(rows: Sequence[dict]) -> str:
    header = ["t", "mean_cost", "cost_lo", "cost_hi", "success_rate",
              "success_lo", "success_hi"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{row[k]:.6g}" for k in header))
    return "\n".join(lines) + "\n"


@dataclass
class RelativePerformance:
    """Percentage change of b versus a; negative cycle-time change = faster."""

    cycle_time_ci: Tuple[float, float]
    cycle_time_mean: float
    success_ci: Tuple[float, float]
    success_mean: float
    n_pairs: int

    def to_json(self) -> dict:
        return {"cycle_time_pct": [self.cycle_time_ci[0], self.cycle_time_ci[1]],
                "cycle_time_mean_pct": self.cycle_time_mean,
                "success_pct": [self.success_ci[0], self.success_ci[1]],
                "success_mean_pct": self.success_mean,
                "n_pairs": self.n_pairs}


def relative_performance(logs_a: Dict[Tuple, Sequence[dict]],
                         logs_b: Dict[Tuple, Sequence[dict]],
                         at_time: Optional[float] = None,
                         n_boot: int = BOOTSTRAP_SAMPLES,
                         seed: int = 0) -> RelativePerformance:
    """Paired bootstrap CI of the percentage change in mean cycle time and
    success rate of b over a; inputs map (task, seed) keys to run logs."""
    keys = sorted(set(logs_a) & set(logs_b))
    if not keys:
        raise ValueError("no paired (task, seed) runs between the two inputs")
    if len(keys) != len(logs_a) or len(keys) != len(logs_b):
        raise ValueError("inputs are not fully paired by (task, seed)")
    horizon = at_time if at_time is not None else math.inf
    a_cost = np.array([best_cost_at(logs_a[k], horizon) for k in keys])
    b_cost = np.array([best_cost_at(logs_b[k], horizon) for k in keys])
    a_succ = np.array([solved_by(logs_a[k], horizon) for k in keys], dtype=float)
    b_succ = np.array([solved_by(logs_b[k], horizon) for k in keys], dtype=float)

    rng = np.random.default_rng(seed)
    n = len(keys)
    idx = rng.integers(0, n, size=(n_boot, n))

    def pct_change(num, den):
        return (num - den) / np.where(den == 0, np.nan, den) * 100.0

    cost_samples = pct_change(b_cost[idx].mean(axis=1), a_cost[idx].mean(axis=1))
    succ_samples = pct_change(b_succ[idx].mean(axis=1), a_succ[idx].mean(axis=1))
    cost_ci = tuple(np.percentile(cost_samples[~np.isnan(cost_samples)], [2.5, 97.5]))
    succ_valid = succ_samples[~np.isnan(succ_samples)]
    succ_ci = tuple(np.percentile(succ_valid, [2.5, 97.5])) if len(succ_valid) \
        else (math.nan, math.nan)
    return RelativePerformance(
        cycle_time_ci=(float(cost_ci[0]), float(cost_ci[1])),
        cycle_time_mean=float(pct_change(b_cost.mean(), a_cost.mean())),
        success_ci=(float(succ_ci[0]), float(succ_ci[1])),
        success_mean=float(pct_change(b_succ.mean(), a_succ.mean()))
        if a_succ.mean() > 0 else math.nan,
        n_pairs=n)


# ----------------------------------------------------------------------
# secondary cost metrics and correlations

def solution_metrics(record, catalog, task) -> dict:
    """Cycle time plus the secondary costs used for correlation analysis."""
    robot = record.robot(catalog)
    traj = record.trajectory
    dq = np.diff(traj.q, axis=0)
    path_length = float(np.linalg.norm(dq, axis=1).sum())
    tau = robot.inverse_dynamics_batch(traj.q, traj.qd, traj.qdd,
                                       f_ext=task.f_ext, gravity=task.gravity)
    power = np.abs(tau * traj.qd).sum(axis=1)
    energy = float(np.trapezoid(power, dx=traj.dt))
    n_joints = robot.n_dof
    n_modules = len(record.assembly_ids)
    mass = float(sum(catalog[m].mass for m in record.assembly_ids))
    return {"cycle_time": traj.duration, "path_length": path_length,
            "energy": energy, "n_joints": n_joints, "n_modules": n_modules,
            "mass": mass}


def pearson_ci(x: Sequence[float], y: Sequence[float],
               level: float = 0.95) -> Tuple[float, float, float]:
    """Pearson r with a Fisher-z confidence interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ValueError("need at least 3 samples")
    if x.std() == 0 or y.std() == 0:
        raise ValueError("degenerate variance")
    r = float(np.corrcoef(x, y)[0, 1])
    z = math.atanh(max(min(r, 1 - 1e-15), -1 + 1e-15))
    se = 1.0 / math.sqrt(len(x) - 3)
    zc = sps.norm.ppf((1 + level) / 2)
    lo, hi = math.tanh(z - zc * se), math.tanh(z + zc * se)
    return r, float(lo), float(hi)


def correlate(metric_rows: Sequence[dict]) -> List[dict]:
    """Pearson r + 95% CI of cycle time against each secondary cost."""
    if len(metric_rows) < 3:
        raise ValueError("need at least 3 solutions")
    cycle = [row["cycle_time"] for row in metric_rows]
    out = []
    for key in ("path_length", "energy", "n_joints", "n_modules", "mass"):
        values = [row[key] for row in metric_rows]
        try:
            r, lo, hi = pearson_ci(cycle, values)
        except ValueError:
            r = lo = hi = math.nan
        out.append({"metric": key, "r": r, "lo": lo, "hi": hi,
                    "n": len(metric_rows)})
    return out


def correlate_csv(rows: Sequence[dict]) -> str:
    header = ["metric", "r", "lo", "hi", "n"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join([row["metric"], f"{row['r']:.6g}",
                               f"{row['lo']:.6g}", f"{row['hi']:.6g}",
                               str(row["n"])]))
    return "\n".join(lines) + "\n"
