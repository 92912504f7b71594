"""Self- and environment-collision checks with a safety margin.

Robot occupancy is one capsule per module body (joints contribute two halves,
split at the motor). All checks are distance based: a pair counts as a hit
when its surface separation falls below the scene margin. Everything is
vectorized over configuration batches; `segment_clear` is the planner's hot
path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .meter import Counters
from .robot import RobotInstance
from .spatial import Pose

_EPS = 1e-12


class ShapeKind(enum.Enum):
    SPHERE = "sphere"
    CAPSULE = "capsule"
    BOX = "box"


@dataclass(frozen=True)
class Shape:
    """Obstacle primitive in the world frame.

    Parameters by kind: sphere radius; capsule radius and full axis length
    (axis = local z); box full edge lengths.
    """

    kind: ShapeKind
    pose: Pose
    radius: float = 0.0
    length: float = 0.0
    size: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind is ShapeKind.SPHERE and self.radius <= 0:
            raise ValueError("sphere needs a positive radius")
        if self.kind is ShapeKind.CAPSULE and (self.radius <= 0 or self.length <= 0):
            raise ValueError("capsule needs positive radius and length")
        if self.kind is ShapeKind.BOX and min(self.size) <= 0:
            raise ValueError("box needs positive edge lengths")

    @staticmethod
    def sphere(center: Sequence[float], radius: float) -> "Shape":
        return Shape(ShapeKind.SPHERE, Pose.from_translation(center), radius=radius)

    @staticmethod
    def box(size: Sequence[float], pose: Pose) -> "Shape":
        return Shape(ShapeKind.BOX, pose, size=tuple(float(s) for s in size))

    @staticmethod
    def capsule(radius: float, length: float, pose: Pose) -> "Shape":
        return Shape(ShapeKind.CAPSULE, pose, radius=radius, length=float(length))

    def to_json(self) -> dict:
        obj = {"kind": self.kind.value, "pose": self.pose.to_json()}
        if self.kind is ShapeKind.SPHERE:
            obj["radius"] = self.radius
        elif self.kind is ShapeKind.CAPSULE:
            obj["radius"] = self.radius
            obj["length"] = self.length
        else:
            obj["size"] = list(self.size)
        return obj

    @staticmethod
    def from_json(obj: dict) -> "Shape":
        kind = ShapeKind(obj["kind"])
        pose = Pose.from_json(obj["pose"])
        if kind is ShapeKind.SPHERE:
            return Shape(kind, pose, radius=float(obj["radius"]))
        if kind is ShapeKind.CAPSULE:
            return Shape(kind, pose, radius=float(obj["radius"]),
                         length=float(obj["length"]))
        return Shape(kind, pose, size=tuple(float(s) for s in obj["size"]))


@dataclass
class CollisionScene:
    obstacles: List[Shape] = field(default_factory=list)
    margin: float = 0.01

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")

    def to_json(self) -> dict:
        return {"margin": self.margin,
                "obstacles": [o.to_json() for o in self.obstacles]}

    @staticmethod
    def from_json(obj: dict) -> "CollisionScene":
        return CollisionScene([Shape.from_json(o) for o in obj.get("obstacles", [])],
                              margin=float(obj.get("margin", 0.01)))


@dataclass
class CollisionReport:
    self_pairs: List[Tuple[int, int]]
    obstacle_hits: List[Tuple[int, int]]

    @property
    def clear(self) -> bool:
        return not self.self_pairs and not self.obstacle_hits


# ----------------------------------------------------------------------
# distance primitives, vectorized over leading batch dimensions

def segment_segment_distance(p0, p1, q0, q1) -> np.ndarray:
    """Minimum distance between segments [p0,p1] and [q0,q1] (batched)."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("...i,...i", d1, d1)
    e = np.einsum("...i,...i", d2, d2)
    f = np.einsum("...i,...i", d2, r)
    c = np.einsum("...i,...i", d1, r)
    b = np.einsum("...i,...i", d1, d2)
    denom = a * e - b * b

    s = np.where(denom > _EPS, np.clip((b * f - c * e) / np.where(denom > _EPS, denom, 1.0), 0.0, 1.0), 0.0)
    t = np.where(e > _EPS, (b * s + f) / np.where(e > _EPS, e, 1.0), 0.0)

    t_clamped = np.clip(t, 0.0, 1.0)
    need_recompute = t != t_clamped
    s_re = np.clip((b * t_clamped - c) / np.where(a > _EPS, a, 1.0), 0.0, 1.0)
    s = np.where(need_recompute & (a > _EPS), s_re, s)
    s = np.where(a > _EPS, s, 0.0)
    t = t_clamped

    cp1 = p0 + s[..., None] * d1
    cp2 = q0 + t[..., None] * d2
    return np.linalg.norm(cp1 - cp2, axis=-1)


def segment_point_distance(p0, p1, x) -> np.ndarray:
    d = p1 - p0
    a = np.einsum("...i,...i", d, d)
    t = np.einsum("...i,...i", x - p0, d) / np.where(a > _EPS, a, 1.0)
    t = np.where(a > _EPS, np.clip(t, 0.0, 1.0), 0.0)
    cp = p0 + t[..., None] * d
    return np.linalg.norm(x - cp, axis=-1)


def _point_aabb_distance(p, half) -> np.ndarray:
    d = np.maximum(np.abs(p) - half, 0.0)
    return np.linalg.norm(d, axis=-1)


def segment_box_distance(p0, p1, box: Shape) -> np.ndarray:
    """Distance from segments to an oriented box (batched over segments).

    The point-to-AABB distance is convex along the segment, so a ternary
    search over the parameter finds the global minimum.
    """
    inv = box.pose.inverse()
    a = p0 @ inv.r.T + inv.t
    b = p1 @ inv.r.T + inv.t
    half = np.asarray(box.size, dtype=float) / 2.0

    lo = np.zeros(a.shape[:-1])
    hi = np.ones(a.shape[:-1])
    for _ in range(30):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        d1 = _point_aabb_distance(a + m1[..., None] * (b - a), half)
        d2 = _point_aabb_distance(a + m2[..., None] * (b - a), half)
        take_left = d1 <= d2
        hi = np.where(take_left, m2, hi)
        lo = np.where(take_left, lo, m1)
    t = (lo + hi) / 2.0
    return _point_aabb_distance(a + t[..., None] * (b - a), half)


def _capsule_axis_endpoints(shape: Shape) -> Tuple[np.ndarray, np.ndarray]:
    half = np.array([0.0, 0.0, shape.length / 2.0])
    return shape.pose.apply(-half), shape.pose.apply(half)


def capsule_obstacle_separation(p0: np.ndarray, p1: np.ndarray, radii: np.ndarray,
                                obstacle: Shape) -> np.ndarray:
    """Surface separation between robot capsules (batched) and one obstacle."""
    if obstacle.kind is ShapeKind.SPHERE:
        d = segment_point_distance(p0, p1, obstacle.pose.t)
        return d - radii - obstacle.radius
    if obstacle.kind is ShapeKind.CAPSULE:
        a, b = _capsule_axis_endpoints(obstacle)
        d = segment_segment_distance(p0, p1, np.broadcast_to(a, p0.shape),
                                     np.broadcast_to(b, p1.shape))
        return d - radii - obstacle.radius
    return segment_box_distance(p0, p1, obstacle) - radii


# ----------------------------------------------------------------------
# robot-level checks

def _self_pair_indices(robot: RobotInstance) -> Tuple[np.ndarray, np.ndarray]:
    return robot.self_collision_pairs


def clear_mask(robot: RobotInstance, qs: np.ndarray, scene: CollisionScene,
               counters: Optional[Counters] = None) -> np.ndarray:
    """Boolean mask over a configuration batch: True where fully clear."""
    qs = np.asarray(qs, dtype=float)
    if qs.ndim == 1:
        qs = qs[None, :]
    if counters is not None:
        counters.config_checks += qs.shape[0]
    p0, p1, radii = robot.capsules_world(qs)
    ok = np.ones(qs.shape[0], dtype=bool)

    ii, jj = _self_pair_indices(robot)
    if len(ii):
        d = segment_segment_distance(p0[:, ii], p1[:, ii], p0[:, jj], p1[:, jj])
        sep = d - radii[ii] - radii[jj]
        ok &= (sep >= scene.margin).all(axis=1)

    for obstacle in scene.obstacles:
        sep = capsule_obstacle_separation(p0, p1, radii, obstacle)
        ok &= (sep >= scene.margin).all(axis=1)
    return ok


def robot_in_collision(robot: RobotInstance, q: np.ndarray, scene: CollisionScene,
                       counters: Optional[Counters] = None) -> CollisionReport:
    """Full report for a single configuration."""
    q = np.asarray(q, dtype=float)
    if counters is not None:
        counters.config_checks += 1
    p0, p1, radii = robot.capsules_world(q[None, :])
    p0, p1 = p0[0], p1[0]

    self_pairs = []
    ii, jj = _self_pair_indices(robot)
    if len(ii):
        d = segment_segment_distance(p0[ii], p1[ii], p0[jj], p1[jj])
        sep = d - radii[ii] - radii[jj]
        for k in np.nonzero(sep < scene.margin)[0]:
            self_pairs.append((int(ii[k]), int(jj[k])))

    obstacle_hits = []
    for o_idx, obstacle in enumerate(scene.obstacles):
        sep = capsule_obstacle_separation(p0, p1, radii, obstacle)
        for c_idx in np.nonzero(sep < scene.margin)[0]:
            obstacle_hits.append((int(c_idx), o_idx))
    return CollisionReport(self_pairs, obstacle_hits)


def interpolate_configs(q_a: np.ndarray, q_b: np.ndarray, resolution: float) -> np.ndarray:
    """Linear interpolation with per-joint steps no larger than `resolution`."""
    q_a = np.asarray(q_a, dtype=float)
    q_b = np.asarray(q_b, dtype=float)
    span = float(np.max(np.abs(q_b - q_a))) if len(q_a) else 0.0
    n = max(int(math.ceil(span / resolution)), 1)
    ts = np.linspace(0.0, 1.0, n + 1)
    return q_a[None, :] + ts[:, None] * (q_b - q_a)[None, :]


def segment_clear(robot: RobotInstance, q_a: np.ndarray, q_b: np.ndarray,
                  scene: CollisionScene, resolution: float = 0.05,
                  counters: Optional[Counters] = None) -> bool:
    """True iff all interpolated configurations along the segment are clear."""
    qs = interpolate_configs(q_a, q_b, resolution)
    return bool(clear_mask(robot, qs, scene, counters=counters).all())
