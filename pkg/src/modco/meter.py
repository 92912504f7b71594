"""Deterministic compute accounting.

Optimization budgets in this package are expressed in seconds but charged
against counted elementary operations (IK iterations, collision configuration
checks, dynamics calls) through a fixed cost model. That makes budgeted runs
reproducible bit-for-bit: two runs with the same seed consume budget
identically regardless of machine load, and logged "timestamps" are meter
readings rather than wall-clock samples.

The default cost model was calibrated on the development machine and is
deliberately on the conservative side; override it from the run config when
wall-clock fidelity matters more than cross-machine reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Counters:
    """Elementary operation counts collected during an evaluation."""

    ik_iters: int = 0
    config_checks: int = 0
    id_calls: int = 0
    plan_iters: int = 0
    topp_grid_points: int = 0
    evals: int = 0

    def add(self, other: "Counters") -> None:
        self.ik_iters += other.ik_iters
        self.config_checks += other.config_checks
        self.id_calls += other.id_calls
        self.plan_iters += other.plan_iters
        self.topp_grid_points += other.topp_grid_points
        self.evals += other.evals

    def snapshot(self) -> dict:
        return {
            "ik_iters": self.ik_iters,
            "config_checks": self.config_checks,
            "id_calls": self.id_calls,
            "plan_iters": self.plan_iters,
            "topp_grid_points": self.topp_grid_points,
            "evals": self.evals,
        }


@dataclass(frozen=True)
class CostModel:
    """Charged seconds per elementary operation (calibrated, conservative)."""

    ik_iter: float = 4.0e-4
    config_check: float = 2.5e-4
    id_call: float = 2.5e-5
    plan_iter: float = 5.0e-6
    topp_grid_point: float = 1.2e-3
    eval_overhead: float = 2.0e-3

    def seconds(self, counters: Counters) -> float:
        return (counters.ik_iters * self.ik_iter
                + counters.config_checks * self.config_check
                + counters.id_calls * self.id_call
                + counters.plan_iters * self.plan_iter
                + counters.topp_grid_points * self.topp_grid_point
                + counters.evals * self.eval_overhead)

    def to_json(self) -> dict:
        return {"ik_iter": self.ik_iter, "config_check": self.config_check,
                "id_call": self.id_call, "plan_iter": self.plan_iter,
                "topp_grid_point": self.topp_grid_point,
                "eval_overhead": self.eval_overhead}

    @staticmethod
    def from_json(obj: dict) -> "CostModel":
        return CostModel(**obj)


DEFAULT_COST_MODEL = CostModel()
