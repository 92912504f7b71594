"""Rigid-body poses, rotation helpers and scalar pose projections.

Everything downstream (goals, base regions, forward kinematics) trades in
``Pose`` objects; projections turn relative poses into scalars that can be
checked against tolerance intervals.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

_EPS = 1e-12


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < _EPS:
        raise ValueError("rotation axis must be nonzero")
    x, y, z = axis / n
    c, s = math.cos(angle), math.sin(angle)
    cc = 1.0 - c
    return np.array([
        [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
        [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
        [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
    ])


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) from a rotation matrix (Shepperd's method)."""
    r = np.asarray(r, dtype=float)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array([(r[2, 1] - r[1, 2]) / s,
                      0.25 * s,
                      (r[0, 1] + r[1, 0]) / s,
                      (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] >= r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array([(r[0, 2] - r[2, 0]) / s,
                      (r[0, 1] + r[1, 0]) / s,
                      0.25 * s,
                      (r[1, 2] + r[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array([(r[1, 0] - r[0, 1]) / s,
                      (r[0, 2] + r[2, 0]) / s,
                      (r[1, 2] + r[2, 1]) / s,
                      0.25 * s])
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def matrix_from_quat(q: Sequence[float]) -> np.ndarray:
    """Rotation matrix from a (w, x, y, z) quaternion; normalizes its input."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def angle_of_rotation(r: np.ndarray) -> float:
    """Angle-axis angle in [0, pi].

    Goes through the quaternion so the result stays well conditioned near
    0 and pi, where acos of the trace loses digits.
    """
    q = quat_from_matrix(r)
    return 2.0 * math.atan2(np.linalg.norm(q[1:]), abs(q[0]))


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation matrix plus translation, meters and radians."""

    r: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        t = np.array(self.t, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("Pose needs a 3x3 rotation and a 3-vector")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_translation(t: Sequence[float]) -> "Pose":
        return Pose(np.eye(3), np.asarray(t, dtype=float))

    @staticmethod
    def from_rotation(axis: Sequence[float], angle: float,
                      t: Optional[Sequence[float]] = None) -> "Pose":
        return Pose(rotation_about(np.asarray(axis, float), angle),
                    np.zeros(3) if t is None else np.asarray(t, float))

    @staticmethod
    def rot_x(angle: float) -> "Pose":
        return Pose.from_rotation((1.0, 0.0, 0.0), angle)

    @staticmethod
    def rot_y(angle: float) -> "Pose":
        return Pose.from_rotation((0.0, 1.0, 0.0), angle)

    @staticmethod
    def rot_z(angle: float) -> "Pose":
        return Pose.from_rotation((0.0, 0.0, 1.0), angle)

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: (self ∘ other)(x) = self(other(x))."""
        return Pose(self.r @ other.r, self.r @ other.t + self.t)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        rt = self.r.T
        return Pose(rt, -rt @ self.t)

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Transform one point or an (n, 3) stack of points."""
        p = np.asarray(p, dtype=float)
        return p @ self.r.T + self.t

    def rot_angle(self) -> float:
        return angle_of_rotation(self.r)

    def quaternion(self) -> np.ndarray:
        return quat_from_matrix(self.r)

    def distance_to_origin(self) -> float:
        return float(np.linalg.norm(self.t))

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (np.allclose(self.r @ self.r.T, np.eye(3), atol=tol)
                and abs(np.linalg.det(self.r) - 1.0) < tol)

    def to_json(self) -> dict:
        q = self.quaternion()
        return {"q": [float(v) for v in q], "t": [float(v) for v in self.t]}

    @staticmethod
    def from_json(obj: dict) -> "Pose":
        return Pose(matrix_from_quat(obj["q"]), np.asarray(obj["t"], dtype=float))


class ProjectionKind(enum.Enum):
    COORD_X = "coord_x"
    COORD_Y = "coord_y"
    COORD_Z = "coord_z"
    ROT_ANGLE = "rot_angle"
    CYLINDER_R = "cylinder_r"
    CUSTOM_AXIS = "custom_axis"


_COORD_INDEX = {ProjectionKind.COORD_X: 0, ProjectionKind.COORD_Y: 1,
                ProjectionKind.COORD_Z: 2}


@dataclass(frozen=True)
class Projection:
    """Scalar projection of a relative pose plus its admissible interval."""

    kind: ProjectionKind
    interval: Tuple[float, float]
    axis: Optional[Tuple[float, float, float]] = None  # CUSTOM_AXIS only

    def __post_init__(self):
        lo, hi = self.interval
        if lo > hi:
            raise ValueError(f"empty projection interval [{lo}, {hi}]")
        if self.kind is ProjectionKind.CUSTOM_AXIS and self.axis is None:
            raise ValueError("custom_axis projection needs an axis")

    def value(self, p: Pose) -> float:
        if self.kind in _COORD_INDEX:
            return float(p.t[_COORD_INDEX[self.kind]])
        if self.kind is ProjectionKind.ROT_ANGLE:
            return p.rot_angle()
        if self.kind is ProjectionKind.CYLINDER_R:
            return float(math.hypot(p.t[0], p.t[1]))
        return float(np.dot(p.t, np.asarray(self.axis, dtype=float)))

    def project(self, p: Pose) -> Tuple[float, bool]:
        """Projected value and whether it lies inside the interval."""
        v = self.value(p)
        lo, hi = self.interval
        return v, (lo <= v <= hi)

    def contains(self, p: Pose) -> bool:
        return self.project(p)[1]

    def to_json(self) -> dict:
        obj = {"kind": self.kind.value, "interval": [float(self.interval[0]),
                                                     float(self.interval[1])]}
        if self.axis is not None:
            obj["axis"] = [float(a) for a in self.axis]
        return obj

    @staticmethod
    def from_json(obj: dict) -> "Projection":
        axis = tuple(obj["axis"]) if "axis" in obj else None
        return Projection(ProjectionKind(obj["kind"]),
                          (float(obj["interval"][0]), float(obj["interval"][1])),
                          axis)


def cube_tolerance(width: float) -> list:
    """Position tolerance restricting x, y, z to a cube of the given width."""
    half = width / 2.0
    return [Projection(k, (-half, half)) for k in
            (ProjectionKind.COORD_X, ProjectionKind.COORD_Y, ProjectionKind.COORD_Z)]
