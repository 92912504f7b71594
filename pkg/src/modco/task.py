"""Task definition: ordered reach goals, base region, scene and cost.

Also hosts the trajectory-level constraint audit used both by the final
cost level of the evaluator and by the standalone `validate` command; it
deliberately depends only on the robot, collision and spatial modules.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .collision import CollisionScene, clear_mask
from .robot import GRAVITY, JointState, RobotInstance
from .spatial import Pose, Projection

VALID_COSTS = ("cycle_time",)


@dataclass(frozen=True)
class ReachGoal:
    """A workspace pose set that the eef must attain at rest."""

    nominal: Pose
    tolerances: Tuple[Projection, ...]
    eps_rest: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "tolerances", tuple(self.tolerances))
        if self.eps_rest <= 0:
            raise ValueError("eps_rest must be positive")

    def relative(self, eef_world: Pose) -> Pose:
        return self.nominal.inverse() @ eef_world

    def pose_ok(self, eef_world: Pose) -> bool:
        rel = self.relative(eef_world)
        return all(s.contains(rel) for s in self.tolerances)

    def to_json(self) -> dict:
        return {"nominal": self.nominal.to_json(),
                "tolerances": [s.to_json() for s in self.tolerances],
                "eps_rest": self.eps_rest}

    @staticmethod
    def from_json(obj: dict) -> "ReachGoal":
        return ReachGoal(Pose.from_json(obj["nominal"]),
                         tuple(Projection.from_json(s) for s in obj["tolerances"]),
                         float(obj.get("eps_rest", 1e-3)))


_BASE_DIMS = ("x", "y", "z", "yaw")


@dataclass(frozen=True)
class BaseRegion:
    """Base pose set: reference pose plus boxed offsets along named dims.

    Offsets apply as reference ∘ Trans(x, y, z) ∘ RotZ(yaw); the free dims
    (those listed) parameterize the region with unit-interval coordinates.
    """

    reference: Pose
    dims: Tuple[Tuple[str, Tuple[float, float]], ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple((d, (float(lo), float(hi)))
                                               for d, (lo, hi) in self.dims))
        for d, (lo, hi) in self.dims:
            if d not in _BASE_DIMS:
                raise ValueError(f"unknown base dim {d!r}")
            if lo > hi:
                raise ValueError(f"empty interval for base dim {d!r}")

    @property
    def n_params(self) -> int:
        return len(self.dims)

    def decode(self, u: Sequence[float]) -> Pose:
        """Map unit-interval coordinates onto the region."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} base parameters")
        offsets = {d: lo + float(ui) * (hi - lo)
                   for (d, (lo, hi)), ui in zip(self.dims, np.clip(u, 0.0, 1.0))}
        t = np.array([offsets.get("x", 0.0), offsets.get("y", 0.0),
                      offsets.get("z", 0.0)])
        pose = self.reference @ Pose.from_translation(t)
        if "yaw" in offsets:
            pose = pose @ Pose.rot_z(offsets["yaw"])
        return pose

    def center(self) -> Pose:
        return self.decode(np.full(self.n_params, 0.5))

    def contains(self, base: Pose, tol: float = 1e-6) -> bool:
        rel = self.reference.inverse() @ base
        yaw = math.atan2(rel.r[1, 0], rel.r[0, 0])
        values = {"x": rel.t[0], "y": rel.t[1], "z": rel.t[2], "yaw": yaw}
        offsets = {}
        for d, (lo, hi) in self.dims:
            v = values[d]
            if not (lo - tol <= v <= hi + tol):
                return False
            offsets[d] = v
        rebuilt = self.reference.inverse() @ self.decode(
            np.array([(offsets[d] - lo) / (hi - lo) if hi > lo else 0.5
                      for d, (lo, hi) in self.dims]))
        return (np.abs(rebuilt.t - rel.t).max() < 1e-5
                and (rebuilt.inverse() @ rel).rot_angle() < 1e-5)

    def to_json(self) -> dict:
        return {"reference": self.reference.to_json(),
                "dims": [[d, [lo, hi]] for d, (lo, hi) in self.dims]}

    @staticmethod
    def from_json(obj: dict) -> "BaseRegion":
        return BaseRegion(Pose.from_json(obj["reference"]),
                          tuple((d, (iv[0], iv[1])) for d, iv in obj["dims"]))


@dataclass
class Task:
    goals: List[ReachGoal]
    scene: CollisionScene
    base_region: BaseRegion
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    f_ext: np.ndarray = field(default_factory=lambda: np.zeros(6))
    cost: str = "cycle_time"
    availability: Dict[str, Union[int, float]] = field(default_factory=dict)
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.goals:
            raise ValueError("a task needs at least one goal")
        if self.cost not in VALID_COSTS:
            raise ValueError(f"unknown cost {self.cost!r}")
        self.gravity = np.asarray(self.gravity, dtype=float)
        self.f_ext = np.asarray(self.f_ext, dtype=float)

    def to_json(self) -> dict:
        avail = {k: ("inf" if math.isinf(v) else int(v))
                 for k, v in self.availability.items()}
        return {"goals": [g.to_json() for g in self.goals],
                "scene": self.scene.to_json(),
                "base_region": self.base_region.to_json(),
                "gravity": [float(v) for v in self.gravity],
                "f_ext": [float(v) for v in self.f_ext],
                "cost": self.cost,
                "availability": avail,
                "seed": self.seed,
                "metadata": self.metadata}

    @staticmethod
    def from_json(obj: dict) -> "Task":
        avail = {k: (math.inf if v == "inf" else int(v))
                 for k, v in obj.get("availability", {}).items()}
        return Task(goals=[ReachGoal.from_json(g) for g in obj["goals"]],
                    scene=CollisionScene.from_json(obj["scene"]),
                    base_region=BaseRegion.from_json(obj["base_region"]),
                    gravity=np.asarray(obj.get("gravity", GRAVITY), dtype=float),
                    f_ext=np.asarray(obj.get("f_ext", np.zeros(6)), dtype=float),
                    cost=obj.get("cost", "cycle_time"),
                    availability=avail,
                    seed=int(obj.get("seed", 0)),
                    metadata=obj.get("metadata", {}))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))

    @staticmethod
    def load(path: Union[str, Path]) -> "Task":
        return Task.from_json(json.loads(Path(path).read_text()))


def goal_satisfied(goal: ReachGoal, robot: RobotInstance, state: JointState) -> bool:
    """Reach-goal predicate: at rest and inside all tolerance projections."""
    if np.linalg.norm(state.qd) > goal.eps_rest:
        return False
    if np.linalg.norm(state.qdd) > goal.eps_rest:
        return False
    return goal.pose_ok(robot.eef_world(state.q))


def goal_pose_mask(goal: ReachGoal, eef_r: np.ndarray, eef_t: np.ndarray) -> np.ndarray:
    """Vectorized tolerance check against batched world eef poses."""
    rg = goal.nominal.r
    tg = goal.nominal.t
    rel_t = np.einsum("ij,bi->bj", rg, eef_t - tg)     # R_g^T (t_e - t_g)
    ok = np.ones(eef_t.shape[0], dtype=bool)
    rel_r = None
    for s in goal.tolerances:
        kind = s.kind.value
        if kind == "coord_x":
            v = rel_t[:, 0]
        elif kind == "coord_y":
            v = rel_t[:, 1]
        elif kind == "coord_z":
            v = rel_t[:, 2]
        elif kind == "cylinder_r":
            v = np.hypot(rel_t[:, 0], rel_t[:, 1])
        elif kind == "custom_axis":
            v = rel_t @ np.asarray(s.axis, dtype=float)
        else:  # rot_angle
            if rel_r is None:
                rel_r = np.einsum("ji,bjk->bik", rg, eef_r)
            tr = np.clip((np.trace(rel_r, axis1=1, axis2=2) - 1.0) / 2.0, -1.0, 1.0)
            v = np.arccos(tr)
        lo, hi = s.interval
        ok &= (v >= lo) & (v <= hi)
    return ok


@dataclass
class TrajectoryAudit:
    """Outcome of the dense constraint re-check over a solution trajectory."""

    violated_constraints: int
    unmet_goals: int
    cost_value: float
    violations: List[str]
    goal_times: List[Optional[float]]

    @property
    def triple(self) -> Tuple[int, int, float]:
        return (self.violated_constraints, self.unmet_goals, self.cost_value)

    @property
    def ok(self) -> bool:
        return self.violated_constraints == 0 and self.unmet_goals == 0


def solution_cost(task: Task, robot: RobotInstance, times: np.ndarray,
                  q: np.ndarray, qd: np.ndarray, qdd: np.ndarray,
                  sample_dt: float = 1e-3, limit_slack: float = 1e-6) -> TrajectoryAudit:
    """Audit a trajectory against every task constraint at `sample_dt`.

    Each constraint contributes at most one violation; goals are matched in
    order and counted separately. The cost value is the trajectory duration
    (cycle-time objective).
    """
    times = np.asarray(times, dtype=float)
    duration = float(times[-1]) if len(times) else 0.0
    dense_t = np.arange(0.0, duration + sample_dt / 2, sample_dt)
    dense_t[-1] = duration

    def resample(arr):
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        return np.stack([np.interp(dense_t, times, arr[:, j])
                         for j in range(arr.shape[1])], axis=1) \
            if arr.size else np.zeros((len(dense_t), 0))

    qs, qds, qdds = resample(q), resample(qd), resample(qdd)
    violations: List[str] = []

    # kinematic limits (closed intervals, small relative slack for sampling)
    if (qs < robot.q_min - limit_slack).any() or (qs > robot.q_max + limit_slack).any():
        violations.append("position_limits")
    if (np.abs(qds) > robot.v_max * (1 + limit_slack)).any():
        violations.append("velocity_limits")
    if (np.abs(qdds) > robot.a_max * (1 + limit_slack)).any():
        violations.append("acceleration_limits")
    tau = robot.inverse_dynamics_batch(qs, qds, qdds, f_ext=task.f_ext,
                                       gravity=task.gravity)
    if (np.abs(tau) > robot.tau_max * (1 + limit_slack)).any():
        violations.append("torque_limits")

    # collisions: report self and obstacle hits separately
    p0, p1, radii = robot.capsules_world(qs)
    from .collision import (_self_pair_indices, capsule_obstacle_separation,
                            segment_segment_distance)
    ii, jj = _self_pair_indices(robot)
    if len(ii):
        d = segment_segment_distance(p0[:, ii], p1[:, ii], p0[:, jj], p1[:, jj])
        if ((d - radii[ii] - radii[jj]) < task.scene.margin).any():
            violations.append("self_collision")
    for obstacle in task.scene.obstacles:
        sep = capsule_obstacle_separation(p0, p1, radii, obstacle)
        if (sep < task.scene.margin).any():
            violations.append("obstacle_collision")
            break
    if not task.base_region.contains(robot.base):
        violations.append("base_region")

    # goals, matched in task order (later goals must come strictly later)
    eef_r, eef_t = robot.eef_batch(qs)
    goal_times: List[Optional[float]] = []
    cursor = -1
    unmet = 0
    for goal in task.goals:
        rest = ((np.linalg.norm(qds, axis=1) <= goal.eps_rest)
                & (np.linalg.norm(qdds, axis=1) <= goal.eps_rest))
        mask = rest & goal_pose_mask(goal, eef_r, eef_t)
        start = cursor + 1
        hit = np.nonzero(mask[start:])[0]
        if len(hit):
            idx = start + int(hit[0])
            goal_times.append(float(dense_t[idx]))
            cursor = idx
        else:
            goal_times.append(None)
            unmet += 1

    return TrajectoryAudit(violated_constraints=len(violations),
                           unmet_goals=unmet,
                           cost_value=duration,
                           violations=violations,
                           goal_times=goal_times)
