"""Numeric inverse kinematics and IK-gene scaling.

Damped least squares descending on the distance to the goal's tolerance
region, with joint-limit projection each step and uniform random restarts
when the descent stalls. Reported residuals are the weighted translational
plus rotational distance to the nominal pose. The collision-aware variant
rejects converged iterates that are in (self-)collision and restarts
instead, within the same iteration budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .catalog import JointSpec
from .collision import CollisionScene, clear_mask
from .meter import Counters
from .robot import RobotInstance
from .task import ReachGoal, goal_pose_mask

ROT_WEIGHT = 0.5        # meters per radian in the pose distance
DAMPING = 1e-2
STEP_CLAMP = 0.2        # rad per iteration, infinity norm


@dataclass
class IkResult:
    q: np.ndarray
    residual: float
    satisfied: bool
    iterations_used: int
    collision_free: Optional[bool] = None


def pose_distance(goal: ReachGoal, eef_r: np.ndarray, eef_t: np.ndarray,
                  rot_weight: float = ROT_WEIGHT) -> float:
    """Weighted translational + rotational distance to the nominal pose."""
    dt = float(np.linalg.norm(eef_t - goal.nominal.t))
    rel = goal.nominal.r.T @ eef_r
    tr = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
    return dt + rot_weight * float(np.arccos(tr))


def _rotation_error_vector(goal_r: np.ndarray, eef_r: np.ndarray) -> np.ndarray:
    """World-frame rotation vector taking the eef orientation to the goal."""
    err = goal_r @ eef_r.T
    w = np.array([err[2, 1] - err[1, 2], err[0, 2] - err[2, 0],
                  err[1, 0] - err[0, 1]])
    s = np.linalg.norm(w) / 2.0
    c = (np.trace(err) - 1.0) / 2.0
    angle = math.atan2(s, c)
    if s < 1e-12:
        return np.zeros(3)
    return w / (2.0 * s) * angle


def _region_error(goal: ReachGoal, eef_r: np.ndarray, eef_t: np.ndarray):
    """Position and rotation error toward the nearest pose inside the
    tolerance region (zero once every projection interval holds)."""
    rg, tg = goal.nominal.r, goal.nominal.t
    rel = rg.T @ (eef_t - tg)
    target = rel.copy()
    rot_hi = None
    for s in goal.tolerances:
        kind = s.kind.value
        lo, hi = s.interval
        # aim strictly inside the interval, else the descent converges onto
        # the boundary without ever crossing it
        pad = 0.1 * (hi - lo)
        lo_in, hi_in = lo + pad, hi - pad
        if kind == "coord_x":
            target[0] = min(max(target[0], lo_in), hi_in)
        elif kind == "coord_y":
            target[1] = min(max(target[1], lo_in), hi_in)
        elif kind == "coord_z":
            target[2] = min(max(target[2], lo_in), hi_in)
        elif kind == "cylinder_r":
            r = math.hypot(target[0], target[1])
            if r > hi_in and r > 1e-12:
                target[:2] *= hi_in / r
            elif r < lo_in:
                if r > 1e-12:
                    target[:2] *= lo_in / r
                else:
                    target[0] = lo_in
        elif kind == "custom_axis":
            axis = np.asarray(s.axis, dtype=float)
            v = float(target @ axis)
            shift = min(max(v, lo_in), hi_in) - v
            target = target + shift * axis / max(float(axis @ axis), 1e-12)
        else:  # rot_angle upper bound; the tightest one wins
            rot_hi = hi if rot_hi is None else min(rot_hi, hi)
    pos_err = rg @ (target - rel)

    if rot_hi is None:
        rot_err = np.zeros(3)
    else:
        full = _rotation_error_vector(rg, eef_r)
        theta = float(np.linalg.norm(full))
        slack = 0.9 * rot_hi
        if theta <= slack or theta < 1e-12:
            rot_err = np.zeros(3)
        else:
            rot_err = full * ((theta - slack) / theta)
    return pos_err, rot_err


def solve_ik(robot: RobotInstance, goal: ReachGoal, seed_q: np.ndarray,
             budget: int, avoid_collisions: bool = False,
             scene: Optional[CollisionScene] = None,
             rng: Optional[np.random.Generator] = None,
             counters: Optional[Counters] = None,
             rot_weight: float = ROT_WEIGHT) -> IkResult:
    """Best-effort IK: returns the best configuration found within budget.

    A result counts as satisfied when the goal tolerances hold at rest and,
    with avoid_collisions, the configuration clears the scene margin.
    """
    q = robot.clip_to_limits(np.asarray(seed_q, dtype=float))
    if robot.n_dof == 0:
        axes, origins, eef_r, eef_t = robot.fk_query(q)
        d = pose_distance(goal, eef_r, eef_t, rot_weight)
        ok = bool(goal_pose_mask(goal, eef_r[None], eef_t[None])[0])
        if ok and avoid_collisions and scene is not None:
            ok = bool(clear_mask(robot, q, scene, counters=counters)[0])
        return IkResult(q.copy(), d, ok, 0,
                        collision_free=ok if avoid_collisions else None)
    best_q = q.copy()
    best_d = math.inf
    used = 0
    since_improve = 0
    span = robot.q_max - robot.q_min

    while True:
        axes, origins, eef_r, eef_t = robot.fk_query(q)
        d = pose_distance(goal, eef_r, eef_t, rot_weight)
        if d < best_d - 1e-9:
            best_d = d
            best_q = q.copy()
            since_improve = 0
        else:
            since_improve += 1
        if goal_pose_mask(goal, eef_r[None], eef_t[None])[0]:
            clear = True
            if avoid_collisions and scene is not None:
                clear = bool(clear_mask(robot, q, scene, counters=counters)[0])
            if clear:
                if counters is not None:
                    counters.ik_iters += used
                return IkResult(q.copy(), d, True, used,
                                collision_free=True if avoid_collisions else None)
            # converged into a colliding pose: try a fresh basin
            if rng is None or used >= budget:
                break
            q = robot.q_min + rng.random(robot.n_dof) * span
            used += 1
            continue
        if used >= budget:
            break
        if since_improve >= 10 and rng is not None:
            # limit-cycle or local minimum: fresh basin
            q = robot.q_min + rng.random(robot.n_dof) * span
            used += 1
            since_improve = 0
            continue

        # damped least-squares step toward the tolerance region; orientation
        # rows only participate while the rotation tolerance is violated, so
        # a satisfied orientation does not brake position progress
        pos_err, rot_err = _region_error(goal, eef_r, eef_t)
        w_rot = rot_weight if float(np.abs(rot_err).max()) > 0.0 else 0.0
        err = np.concatenate([pos_err, w_rot * rot_err])
        jac = np.zeros((6, robot.n_dof))
        diff = eef_t - origins
        for i in range(robot.n_dof):
            jac[:3, i] = np.cross(axes[i], diff[i])
            jac[3:, i] = w_rot * axes[i]
        jtj = jac.T @ jac + (DAMPING ** 2) * np.eye(robot.n_dof)
        try:
            dq = np.linalg.solve(jtj, jac.T @ err)
        except np.linalg.LinAlgError:
            dq = jac.T @ err
        step = float(np.max(np.abs(dq))) if len(dq) else 0.0
        if step > STEP_CLAMP:
            dq = dq * (STEP_CLAMP / step)
        q_new = robot.clip_to_limits(q + dq)
        used += 1
        if float(np.max(np.abs(q_new - q))) < 1e-9:
            # stalled (local minimum or limit corner): restart if possible
            if rng is None or used >= budget:
                break
            q_new = robot.q_min + rng.random(robot.n_dof) * span
        q = q_new

    if counters is not None:
        counters.ik_iters += used
    collision_free = None
    if avoid_collisions and scene is not None:
        collision_free = bool(clear_mask(robot, best_q, scene,
                                         counters=counters)[0])
    return IkResult(best_q, best_d, False, used, collision_free=collision_free)


def decode_ik_gene(rho: float, joint: JointSpec) -> float:
    """Affine map of a unit-interval gene onto the joint's position limits."""
    rho = min(max(float(rho), 0.0), 1.0)
    return (1.0 - rho) * joint.q_min + rho * joint.q_max


def encode_ik_gene(q: float, joint: JointSpec) -> float:
    """Inverse of decode_ik_gene, used by the Lamarckian writeback."""
    return (float(q) - joint.q_min) / (joint.q_max - joint.q_min)


def decode_ik_vector(rhos: Sequence[float], joints: Sequence[JointSpec]) -> np.ndarray:
    return np.array([decode_ik_gene(r, j) for r, j in zip(rhos, joints)])


def encode_ik_vector(qs: Sequence[float], joints: Sequence[JointSpec]) -> np.ndarray:
    return np.array([encode_ik_gene(q, j) for q, j in zip(qs, joints)])
