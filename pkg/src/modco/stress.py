"""Robustness pipeline: perturb goal poses, then repair solutions in stages.

The repair escalates: re-check the original trajectory, re-solve IK near the
old solutions, swap path endpoints, replan from scratch, re-parameterize.
The first stage that yields a fully validated trajectory wins; failures are
labeled by the stage that exhausted its options.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .catalog import ModuleCatalog
from .collision import segment_clear
from .config import ScopeConfig
from .ik import solve_ik
from .meter import Counters
from .planner import JointPath, Roadmap, path_time_lower_bound, plan, roadmap_key, trivial_path
from .solutions import SolutionRecord
from .spatial import Pose, rotation_about
from .task import Task, TrajectoryAudit, solution_cost
from .timing import Trajectory, concatenate, parameterize

STAGES = ("still_valid", "fresh_ik", "retargeted_last_waypoint", "replanned",
          "reparameterized")
OUTCOMES = ("still_valid", "retargeted_last_waypoint", "replanned",
            "failed_ik", "failed_path")


def perturb(task: Task, max_shift: float = 0.04,
            max_tilt: float = math.radians(5.0), n_variants: int = 56,
            seed: int = 0) -> List[Task]:
    """Variants with every goal shifted and tilted by bounded random amounts."""
    variants = []
    for v in range(n_variants):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7, v)))
        goals = []
        for goal in task.goals:
            direction = rng.normal(size=3)
            norm = np.linalg.norm(direction)
            direction = direction / norm if norm > 1e-12 else np.array([1.0, 0, 0])
            shift = direction * rng.uniform(0.0, max_shift)
            axis = rng.normal(size=3)
            tilt = rotation_about(axis, rng.uniform(0.0, max_tilt)) \
                if np.linalg.norm(axis) > 1e-12 else np.eye(3)
            nominal = Pose(tilt @ goal.nominal.r, goal.nominal.t + shift)
            goals.append(type(goal)(nominal, goal.tolerances, goal.eps_rest))
        meta = dict(task.metadata)
        meta["perturbation"] = {"variant": v, "max_shift": max_shift,
                                "max_tilt": max_tilt, "seed": seed}
        variants.append(Task(goals=goals, scene=task.scene,
                             base_region=task.base_region,
                             gravity=task.gravity, f_ext=task.f_ext,
                             cost=task.cost, availability=task.availability,
                             seed=task.seed, metadata=meta))
    return variants


@dataclass
class RepairReport:
    outcome: str
    stages_tried: List[str] = field(default_factory=list)
    trajectory: Optional[Trajectory] = None
    audit: Optional[TrajectoryAudit] = None

    @property
    def ok(self) -> bool:
        return self.outcome in ("still_valid", "retargeted_last_waypoint",
                                "replanned")


def repair(record: SolutionRecord, perturbed: Task, catalog: ModuleCatalog,
           config: ScopeConfig, rng: Optional[np.random.Generator] = None,
           counters: Optional[Counters] = None) -> RepairReport:
    """Adapt a previously valid solution to a perturbed task."""
    rng = rng if rng is not None else np.random.default_rng(0)
    robot = record.robot(catalog)
    report = RepairReport(outcome="failed_path")
    traj = record.trajectory

    # stage 1: maybe the tolerances still swallow the perturbation
    report.stages_tried.append("still_valid")
    audit = solution_cost(perturbed, robot, traj.times, traj.q, traj.qd, traj.qdd)
    if audit.ok:
        return RepairReport("still_valid", report.stages_tried, traj, audit)

    # stage 2: fresh IK near the old solutions for goals that drifted out
    report.stages_tried.append("fresh_ik")
    ik_budget = config.n_ik_obs if config.n_ik_obs is not None else 300
    new_q: List[np.ndarray] = []
    changed = []
    for g_idx, goal in enumerate(perturbed.goals):
        q_old = record.ik_solutions[g_idx]
        res = solve_ik(robot, goal, q_old, budget=ik_budget,
                       avoid_collisions=True, scene=perturbed.scene, rng=rng,
                       counters=counters, rot_weight=config.rot_weight)
        if not res.satisfied:
            return RepairReport("failed_ik", report.stages_tried)
        moved = float(np.max(np.abs(res.q - q_old))) > 1e-9
        new_q.append(res.q)
        changed.append(moved)

    def retime_and_audit(paths: Sequence[JointPath], stage: str) -> Optional[RepairReport]:
        legs = []
        for path in paths:
            leg = parameterize(robot, path, delta=config.path_deviation,
                               dt=config.trajectory_dt, gravity=perturbed.gravity,
                               f_ext=perturbed.f_ext, counters=counters)
            if leg is None:
                return None
            legs.append(leg)
        if legs:
            solution = concatenate(legs)
        else:
            q0 = new_q[0]
            zero = np.zeros_like(q0)
            solution = Trajectory(config.trajectory_dt, q0[None, :],
                                  zero[None, :], zero[None, :], goal_times=[0.0])
        final = solution_cost(perturbed, robot, solution.times, solution.q,
                              solution.qd, solution.qdd)
        if final.ok:
            return RepairReport(stage, report.stages_tried, solution, final)
        return None

    # stage 3: swap the path endpoints for the drifted goals and re-check
    # only the modified segments
    report.stages_tried.append("retargeted_last_waypoint")
    retargeted: List[JointPath] = []
    retarget_ok = True
    for i, path in enumerate(record.paths):
        if path is None:
            retarget_ok = False
            break
        waypoints = path.waypoints.copy()
        waypoints[0] = new_q[i]
        waypoints[-1] = new_q[i + 1]
        segments_ok = True
        if changed[i] or changed[i + 1]:
            if len(waypoints) >= 2:
                segments_ok = segment_clear(robot, waypoints[0], waypoints[1],
                                            perturbed.scene,
                                            config.collision_resolution,
                                            counters=counters)
                if segments_ok and len(waypoints) > 2:
                    segments_ok = segment_clear(robot, waypoints[-2], waypoints[-1],
                                                perturbed.scene,
                                                config.collision_resolution,
                                                counters=counters)
        if not segments_ok:
            retarget_ok = False
            break
        try:
            retargeted.append(JointPath(waypoints) if len(waypoints) > 1
                              else trivial_path(waypoints[0]))
        except ValueError:
            retargeted.append(trivial_path(waypoints[0]))
    if retarget_ok and retargeted:
        result = retime_and_audit(retargeted, "retargeted_last_waypoint")
        if result is not None:
            return result
    elif retarget_ok and not record.paths:
        result = retime_and_audit([], "retargeted_last_waypoint")
        if result is not None:
            return result

    # stage 4: replan every leg between the fresh IK solutions
    report.stages_tried.append("replanned")
    planned: List[JointPath] = []
    for i in range(len(new_q) - 1):
        key = roadmap_key(record.assembly_ids, record.base, perturbed.scene)
        roadmap = Roadmap(key, robot.n_dof)
        path = plan(robot, new_q[i], new_q[i + 1], perturbed.scene,
                    time_limit=config.t_plan, roadmap=roadmap, rng=rng,
                    counters=counters, resolution=config.collision_resolution,
                    cost_model=config.cost_model)
        if path is None:
            return RepairReport("failed_path", report.stages_tried)
        planned.append(path)

    # stage 5: re-parameterize the replanned legs
    report.stages_tried.append("reparameterized")
    result = retime_and_audit(planned, "replanned")
    if result is not None:
        return result
    return RepairReport("failed_path", report.stages_tried)


def outcome_csv(rows: Sequence[dict]) -> str:
    header = ["task", "variant", "outcome", "stages_tried", "cycle_time"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join([str(row.get("task", "")),
                               str(row.get("variant", "")),
                               row.get("outcome", ""),
                               "|".join(row.get("stages_tried", [])),
                               "" if row.get("cycle_time") is None
                               else f"{row['cycle_time']:.6g}"]))
    return "\n".join(lines) + "\n"
