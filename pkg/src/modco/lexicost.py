"""Recursive lexicographic cost hierarchy with hierarchical elimination.

A candidate is scored by levels of increasing computational cost; the first
failing level terminates the evaluation and deeper levels stay absent. The
resulting cost vectors are totally ordered: earlier levels dominate, and a
candidate whose evaluation stopped early ranks worse than one that got
deeper with the same prefix.

Level schema (each level is a tuple):
  0 validity     (#decode violations)           - cheap guard before anything
  1 length       (too-short indicator)
  2 availability (#missing modules)
  3 ik           (-#goals solved, sum residual)  - obstacle-blind
  4 ik_obstacles (-#goals solved, sum residual)  - collision aware
  5 ik_limits    (#solutions violating limits)
  6 paths        (-#legs connected, sum f_t)
  7 timing       (-#legs parameterized, sum t_end)
  8 solution     (#violated constraints, #unmet goals, cost value)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .catalog import (Assembly, ModuleCatalog, ModuleKind, assembly_length,
                      missing_module_cost, validate_assembly)
from .collision import clear_mask
from .config import ScopeConfig
from .ik import IkResult, pose_distance, solve_ik
from .meter import Counters
from .planner import (JointPath, Roadmap, RoadmapStore, path_time_lower_bound,
                      plan, roadmap_key, trivial_path)
from .robot import JointState, RobotInstance
from .spatial import Pose
from .task import Task, goal_pose_mask, solution_cost
from .timing import Trajectory, concatenate, parameterize

LEVEL_NAMES = ("validity", "length", "availability", "ik", "ik_obstacles",
               "ik_limits", "paths", "timing", "solution")


@dataclass(frozen=True)
class LexCost:
    """Ordered per-level cost tuples; absent levels mark elimination depth."""

    levels: Tuple[Tuple[float, ...], ...]

    @property
    def depth(self) -> int:
        return len(self.levels)

    def compare(self, other: "LexCost") -> int:
        """-1 when self is better (lower), +1 when worse, 0 when equal."""
        common = min(self.depth, other.depth)
        for i in range(common):
            a, b = self.levels[i], other.levels[i]
            if len(a) != len(b):
                raise ValueError(f"level {i} schema mismatch: {len(a)} vs {len(b)}")
            if a < b:
                return -1
            if a > b:
                return 1
        if self.depth == other.depth:
            return 0
        # tied prefix: the deeper evaluation survived more levels and wins
        return -1 if self.depth > other.depth else 1

    def __lt__(self, other: "LexCost") -> bool:
        return self.compare(other) < 0

    def __le__(self, other: "LexCost") -> bool:
        return self.compare(other) <= 0

    def __eq__(self, other) -> bool:
        return isinstance(other, LexCost) and self.compare(other) == 0

    def __hash__(self):
        return hash(self.levels)

    def to_json(self) -> list:
        return [list(level) for level in self.levels]

    @staticmethod
    def from_json(obj: Sequence[Sequence[float]]) -> "LexCost":
        return LexCost(tuple(tuple(float(v) for v in level) for level in obj))

    @property
    def solved(self) -> bool:
        return (self.depth == len(LEVEL_NAMES)
                and self.levels[-1][0] == 0 and self.levels[-1][1] == 0)

    @property
    def cycle_time(self) -> Optional[float]:
        return self.levels[-1][2] if self.depth == len(LEVEL_NAMES) else None


@dataclass
class Candidate:
    """Decoded genome: what the cost hierarchy actually evaluates."""

    assembly: Assembly
    base: Pose
    ik_seeds: Optional[np.ndarray] = None   # (n_goals, n_joints) decoded rad
    decode_violations: int = 0


@dataclass
class Evaluation:
    cost: LexCost
    counters: Counters
    ik_solutions: List[Optional[np.ndarray]] = field(default_factory=list)
    ik_valid: List[bool] = field(default_factory=list)
    paths: List[Optional[JointPath]] = field(default_factory=list)
    legs: List[Optional[Trajectory]] = field(default_factory=list)
    solution: Optional[Trajectory] = None
    robot: Optional[RobotInstance] = None

    @property
    def solved(self) -> bool:
        return self.cost.solved


def joint_specs(assembly: Assembly, catalog: ModuleCatalog):
    return [catalog[mid].joint for mid in assembly
            if catalog[mid].kind is ModuleKind.JOINT]


def evaluate(candidate: Candidate, task: Task, catalog: ModuleCatalog,
             config: ScopeConfig, roadmaps: Optional[RoadmapStore] = None,
             rng: Optional[np.random.Generator] = None) -> Evaluation:
    """Run the cost hierarchy on one candidate, eliminating level by level."""
    counters = Counters()
    counters.evals = 1
    rng = rng if rng is not None else np.random.default_rng()
    levels: List[Tuple[float, ...]] = []
    out = Evaluation(cost=LexCost(()), counters=counters)

    def finish() -> Evaluation:
        out.cost = LexCost(tuple(levels))
        return out

    # validity guard: crossover/mutation can break size compatibility
    violations = candidate.decode_violations
    if violations == 0:
        violations = len(validate_assembly(candidate.assembly, catalog))
    levels.append((float(violations),))
    if violations:
        return finish()

    robot = RobotInstance(candidate.assembly, catalog, base=candidate.base)
    out.robot = robot
    stock = catalog.with_availability(task.availability) if task.availability else catalog

    # L1: reach over-approximation against the farthest goal
    reach = assembly_length(candidate.assembly, catalog)
    farthest = max(float(np.linalg.norm(g.nominal.t - candidate.base.t))
                   for g in task.goals)
    too_short = 1.0 if reach < farthest else 0.0
    levels.append((too_short,))
    if too_short:
        return finish()

    # L2: module availability
    missing = float(missing_module_cost(candidate.assembly, stock))
    levels.append((missing,))
    if missing:
        return finish()

    # L3: IK without obstacles. Solved goals contribute zero residual so
    # that fully solved candidates tie here and the deeper levels decide.
    n_goals = len(task.goals)
    solutions: List[np.ndarray] = []
    solved3 = np.zeros(n_goals, dtype=bool)
    residuals = np.zeros(n_goals)
    for g_idx, goal in enumerate(task.goals):
        if config.has_ik_genes:
            q = robot.clip_to_limits(candidate.ik_seeds[g_idx])
            axes, origins, eef_r, eef_t = robot.fk_query(q)
            counters.ik_iters += 1
            solved3[g_idx] = bool(goal_pose_mask(goal, eef_r[None], eef_t[None])[0])
            if not solved3[g_idx]:
                residuals[g_idx] = pose_distance(goal, eef_r, eef_t,
                                                 config.rot_weight)
            solutions.append(q)
        else:
            seed = rng.uniform(robot.q_min, robot.q_max)
            res = solve_ik(robot, goal, seed, budget=config.n_ik, rng=rng,
                           counters=counters, rot_weight=config.rot_weight)
            solved3[g_idx] = res.satisfied
            if not res.satisfied:
                residuals[g_idx] = res.residual
            solutions.append(res.q)
    levels.append((-float(solved3.sum()), float(residuals.sum())))

    # L4: IK with obstacles
    solved4 = solved3.copy()
    residuals4 = residuals.copy()
    for g_idx, goal in enumerate(task.goals):
        q = solutions[g_idx]
        clear = bool(clear_mask(robot, q, task.scene, counters=counters)[0])
        if config.has_ik_genes:
            solved4[g_idx] = solved3[g_idx] and clear
            if not solved4[g_idx] and solved3[g_idx]:
                axes, origins, eef_r, eef_t = robot.fk_query(q)
                residuals4[g_idx] = pose_distance(goal, eef_r, eef_t,
                                                  config.rot_weight)
            continue
        if solved3[g_idx] and clear:
            continue
        res = solve_ik(robot, goal, q, budget=config.n_ik_obs,
                       avoid_collisions=True, scene=task.scene, rng=rng,
                       counters=counters, rot_weight=config.rot_weight)
        solved4[g_idx] = res.satisfied
        residuals4[g_idx] = 0.0 if res.satisfied else res.residual
        solutions[g_idx] = res.q
    levels.append((-float(solved4.sum()), float(residuals4.sum())))
    out.ik_solutions = list(solutions)
    if not solved4.any():
        return finish()

    # L5: joint limits at the found solutions (static torques at rest)
    rest_q = np.vstack([solutions[g] for g in range(n_goals)])
    tau = robot.inverse_dynamics_batch(rest_q, np.zeros_like(rest_q),
                                       np.zeros_like(rest_q),
                                       f_ext=task.f_ext, gravity=task.gravity)
    counters.id_calls += n_goals
    torque_ok = (np.abs(tau) <= robot.tau_max).all(axis=1)
    position_ok = ((rest_q >= robot.q_min) & (rest_q <= robot.q_max)).all(axis=1)
    valid = solved4 & torque_ok & position_ok
    invalid_count = float((solved4 & ~valid).sum())
    levels.append((invalid_count,))
    out.ik_valid = valid.tolist()
    if not valid.any():
        return finish()

    # L6: connect consecutive valid goals with collision-free paths
    key = roadmap_key(candidate.assembly.module_ids, candidate.base, task.scene)
    roadmap = roadmaps.lease(key, robot.n_dof) if roadmaps is not None \
        else Roadmap(key, robot.n_dof)
    for g_idx in range(n_goals):      # seed all goal configs as waypoints
        if valid[g_idx] and not any(np.array_equal(solutions[g_idx], node)
                                    for node in roadmap.nodes):
            roadmap.add_node(solutions[g_idx])
    paths: List[Optional[JointPath]] = []
    ft_sum = 0.0
    for i in range(n_goals - 1):
        if not (valid[i] and valid[i + 1]):
            paths.append(None)
            continue
        path = plan(robot, solutions[i], solutions[i + 1], task.scene,
                    time_limit=config.t_plan, roadmap=roadmap, rng=rng,
                    counters=counters, resolution=config.collision_resolution,
                    cost_model=config.cost_model)
        paths.append(path)
        if path is not None:
            ft_sum += path_time_lower_bound(path, robot.v_max)
    if roadmaps is not None:
        roadmaps.release(roadmap)
    n_found = sum(p is not None for p in paths)
    levels.append((-float(n_found), float(ft_sum)))
    out.paths = paths
    if n_goals > 1 and n_found == 0:
        return finish()

    # L7: time parameterization of every found leg
    legs: List[Optional[Trajectory]] = []
    t_sum = 0.0
    for path in paths:
        if path is None:
            legs.append(None)
            continue
        traj = parameterize(robot, path, delta=config.path_deviation,
                            dt=config.trajectory_dt, gravity=task.gravity,
                            f_ext=task.f_ext, counters=counters)
        legs.append(traj)
        if traj is not None:
            t_sum += traj.duration
    n_param = sum(t is not None for t in legs)
    levels.append((-float(n_param), float(t_sum)))
    out.legs = legs
    if n_param < n_goals - 1:
        return finish()

    # L8: assemble the full solution and audit it against every constraint
    if n_goals == 1:
        q0 = solutions[0]
        zero = np.zeros_like(q0)
        solution = Trajectory(config.trajectory_dt, q0[None, :], zero[None, :],
                              zero[None, :], goal_times=[0.0])
    else:
        solution = concatenate([legs[i] for i in range(n_goals - 1)])
    out.solution = solution
    audit = solution_cost(task, robot, solution.times, solution.q,
                          solution.qd, solution.qdd)
    counters.id_calls += int(math.ceil(solution.duration / 1e-3)) + 1
    counters.config_checks += int(math.ceil(solution.duration / 1e-3)) + 1
    levels.append((float(audit.violated_constraints), float(audit.unmet_goals),
                   float(audit.cost_value)))
    return finish()
