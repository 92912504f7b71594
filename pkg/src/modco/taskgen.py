"""Procedural benchmark families: simple, hard and edge-case tasks.

Geometry constants are deliberate, documented choices recorded into every
task file: a 2 m x 2 m x 1.2 m workspace above a ground plane, goals inside
the default catalog's comfortable reach, cubic obstacles, and ten cluster
templates that wall in one goal for the edge family.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .collision import CollisionScene, Shape
from .robot import GRAVITY
from .spatial import Pose, Projection, ProjectionKind, cube_tolerance
from .task import BaseRegion, ReachGoal, Task

FAMILIES = ("simple", "hard", "edge")

WORKSPACE_XY = 1.0          # half extent of the workspace box
WORKSPACE_Z = (0.08, 0.85)  # goal height band
REACH_BAND = (0.3, 0.85)    # radial distance of goals from the base center
BASE_CLEARANCE = 0.42       # obstacle keep-out radius around the base patch
GOAL_CLEARANCE = 0.07       # free radius needed around a goal position
CUBE_EDGES = (0.1, 0.4)
MARGIN = 0.01
EDGE_OPENING = 0.13         # half width of cluster openings
EDGE_WALL = 0.03            # cluster wall thickness


@dataclass(frozen=True)
class FamilySpec:
    family: str
    count: int
    seed: int
    goal_tolerance: float = 0.1       # cube width
    rot_tolerance: Optional[float] = None  # None = family default

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.count < 1:
            raise ValueError("count must be at least 1")


_FAMILY_GOALS = {"simple": 3, "hard": 5, "edge": 3}
_FAMILY_CUBES = {"simple": 3, "hard": 5, "edge": 0}
_FAMILY_ROT_TOL = {"simple": math.pi, "hard": 1.0, "edge": math.pi}


def _ground_plane() -> Shape:
    return Shape.box((4.0, 4.0, 0.1), Pose.from_translation((0, 0, -0.05)))


def _default_region() -> BaseRegion:
    return BaseRegion(Pose.identity(), (("x", (-0.3, 0.3)), ("y", (-0.3, 0.3)),
                                        ("yaw", (-math.pi, math.pi))))


def _random_goal_position(rng: np.random.Generator) -> np.ndarray:
    for _ in range(1000):
        p = np.array([rng.uniform(-WORKSPACE_XY, WORKSPACE_XY),
                      rng.uniform(-WORKSPACE_XY, WORKSPACE_XY),
                      rng.uniform(*WORKSPACE_Z)])
        r = math.hypot(p[0], p[1])
        if REACH_BAND[0] <= math.sqrt(r * r + p[2] * p[2]) <= REACH_BAND[1]:
            return p
    raise RuntimeError("could not sample a goal inside the reach band")


def _random_goal_pose(rng: np.random.Generator) -> Pose:
    axis = rng.normal(size=3)
    angle = rng.uniform(0, math.pi)
    return Pose.from_rotation(axis, angle, _random_goal_position(rng))


def _random_cube(rng: np.random.Generator) -> Shape:
    edge = rng.uniform(*CUBE_EDGES)
    pos = np.array([rng.uniform(-WORKSPACE_XY, WORKSPACE_XY),
                    rng.uniform(-WORKSPACE_XY, WORKSPACE_XY),
                    rng.uniform(edge / 2, 0.8)])
    return Shape.box((edge, edge, edge), Pose.from_translation(pos))


def _point_clear_of(shapes: Sequence[Shape], point: np.ndarray,
                    clearance: float) -> bool:
    from .collision import capsule_obstacle_separation
    p = point[None, None, :]
    for shape in shapes:
        sep = capsule_obstacle_separation(p, p, np.zeros((1, 1)), shape)
        if float(sep[0, 0]) < clearance:
            return False
    return True


def _cube_far_from_base(shape: Shape) -> bool:
    center = shape.pose.t
    half = max(shape.size) / 2
    return math.hypot(center[0], center[1]) - half > BASE_CLEARANCE or center[2] - half > 0.55


def _goal_tolerances(spec: FamilySpec) -> Tuple[Projection, ...]:
    rot = spec.rot_tolerance if spec.rot_tolerance is not None \
        else _FAMILY_ROT_TOL[spec.family]
    return tuple(cube_tolerance(spec.goal_tolerance)
                 + [Projection(ProjectionKind.ROT_ANGLE, (0.0, rot))])


# ----------------------------------------------------------------------
# edge-case cluster templates: boxes placed relative to the enclosed goal

def _wall(rng, size, offset):
    return (size, offset)


def _cluster_template(index: int, o: float, w: float) -> List[Tuple[Tuple[float, float, float], Tuple[float, float, float]]]:
    """Boxes (size, offset-from-goal) for template `index`.

    `o` is the opening half width, `w` the wall thickness. Every template
    leaves an approach corridor to the goal point.
    """
    big = 0.5
    span = 2 * o + 2 * big
    templates = {
        0: [  # wall with a centered gap, approach through the hole
            ((w, big, 2 * o), (-o - w / 2, (big + o) / 1, 0)),
            ((w, big, 2 * o), (-o - w / 2, -(big + o), 0)),
            ((w, span, big), (-o - w / 2, 0, big / 2 + o)),
            ((w, span, big), (-o - w / 2, 0, -(big / 2 + o))),
        ],
        1: [  # five-sided box, open toward -x
            ((2 * o, w, 2 * o), (0, o + w / 2, 0)),
            ((2 * o, w, 2 * o), (0, -(o + w / 2), 0)),
            ((2 * o, 2 * o + 2 * w, w), (0, 0, o + w / 2)),
            ((2 * o, 2 * o + 2 * w, w), (0, 0, -(o + w / 2))),
            ((w, 2 * o + 2 * w, 2 * o + 2 * w), (o + w / 2, 0, 0)),
        ],
        2: [  # corner pocket: two walls and a roof
            ((w, 3 * o, 3 * o), (o + w / 2, 0, 0)),
            ((3 * o, w, 3 * o), (0, o + w / 2, 0)),
            ((3 * o, 3 * o, w), (0, 0, o + w / 2)),
        ],
        3: [  # tunnel along x
            ((4 * o, w, 2 * o), (0, o + w / 2, 0)),
            ((4 * o, w, 2 * o), (0, -(o + w / 2), 0)),
            ((4 * o, 2 * o + 2 * w, w), (0, 0, o + w / 2)),
            ((4 * o, 2 * o + 2 * w, w), (0, 0, -(o + w / 2))),
        ],
        4: [  # shelf: plates above and below plus a back wall
            ((3 * o, 3 * o, w), (0, 0, o + w / 2)),
            ((3 * o, 3 * o, w), (0, 0, -(o + w / 2))),
            ((w, 3 * o, 2 * o + 2 * w), (o + w / 2, 0, 0)),
        ],
        5: [  # narrow slot between two walls
            ((3 * o, w, 3 * o), (0, o + w / 2, 0)),
            ((3 * o, w, 3 * o), (0, -(o + w / 2), 0)),
        ],
        6: [  # four pillars
            ((w, w, 4 * o), (1.5 * o, 1.5 * o, 0)),
            ((w, w, 4 * o), (1.5 * o, -1.5 * o, 0)),
            ((w, w, 4 * o), (-1.5 * o, 1.5 * o, 0)),
            ((w, w, 4 * o), (-1.5 * o, -1.5 * o, 0)),
        ],
        7: [  # overhang: roof and one side wall
            ((4 * o, 4 * o, w), (0, 0, o + w / 2)),
            ((4 * o, w, 2 * o + w), (0, o + w / 2, 0)),
        ],
        8: [  # pit: four low walls around a floor-near goal
            ((3 * o, w, 2 * o), (0, o + w / 2, 0)),
            ((3 * o, w, 2 * o), (0, -(o + w / 2), 0)),
            ((w, 2 * o + 2 * w, 2 * o), (o + w / 2, 0, 0)),
            ((w, 2 * o + 2 * w, 2 * o), (-(o + w / 2), 0, 0)),
        ],
        9: [  # wall with an off-center window
            ((w, 2 * big, big), (-o - w / 2, 0, o + big / 2)),
            ((w, 2 * big, big), (-o - w / 2, 0, -(o + big / 2))),
            ((w, big, 2 * o), (-o - w / 2, o + big / 2, 0)),
        ],
    }
    return templates[index]


def _edge_cluster(rng: np.random.Generator, goal_pos: np.ndarray,
                  template_index: int) -> List[Shape]:
    yaw = rng.uniform(-math.pi, math.pi)
    frame = Pose.rot_z(yaw)
    shapes = []
    for size, offset in _cluster_template(template_index, EDGE_OPENING, EDGE_WALL):
        center = goal_pos + frame.r @ np.asarray(offset, dtype=float)
        shapes.append(Shape.box(size, Pose(frame.r, center)))
    return shapes


def generate(spec: FamilySpec) -> List[Task]:
    """Deterministic task list for one family spec."""
    family_key = FAMILIES.index(spec.family)
    tasks = []
    for index in range(spec.count):
        rng = np.random.default_rng(
            np.random.SeedSequence(spec.seed, spawn_key=(family_key, index)))
        tasks.append(_generate_one(spec, index, rng))
    return tasks


def _generate_one(spec: FamilySpec, index: int, rng: np.random.Generator,
                  max_tries: int = 200) -> Task:
    n_goals = _FAMILY_GOALS[spec.family]
    n_cubes = _FAMILY_CUBES[spec.family]
    tolerances = _goal_tolerances(spec)
    for _ in range(max_tries):
        obstacles = [_ground_plane()]
        goals: List[ReachGoal] = []
        template = None
        if spec.family == "edge":
            enclosed_idx = int(rng.integers(0, n_goals))
            template = int(rng.integers(0, 10))
            positions = [_random_goal_position(rng) for _ in range(n_goals)]
            # keep the cluster off the floor and away from the base
            pos = positions[enclosed_idx]
            pos[2] = max(pos[2], 0.35)
            cluster = _edge_cluster(rng, pos, template)
            obstacles.extend(cluster)
            for g_idx, p in enumerate(positions):
                axis = rng.normal(size=3)
                pose = Pose.from_rotation(axis, rng.uniform(0, math.pi), p)
                goals.append(ReachGoal(pose, tolerances))
        else:
            cubes = []
            while len(cubes) < n_cubes:
                cube = _random_cube(rng)
                if _cube_far_from_base(cube):
                    cubes.append(cube)
            obstacles.extend(cubes)
            goals = [ReachGoal(_random_goal_pose(rng), tolerances)
                     for _ in range(n_goals)]

        ok = True
        for g_idx, goal in enumerate(goals):
            relevant = obstacles
            if spec.family == "edge" and g_idx == enclosed_idx:
                relevant = [obstacles[0]]  # the cluster hugs this goal by design
            if not _point_clear_of(relevant, goal.nominal.t,
                                   MARGIN + GOAL_CLEARANCE):
                ok = False
                break
            if spec.family == "edge" and g_idx == enclosed_idx:
                if not _point_clear_of(obstacles[1:], goal.nominal.t,
                                       MARGIN + 0.05):
                    ok = False
                    break
        if not ok:
            continue

        metadata = {
            "family": spec.family, "index": index, "seed": spec.seed,
            "workspace_xy": WORKSPACE_XY, "workspace_z": list(WORKSPACE_Z),
            "reach_band": list(REACH_BAND),
            "goal_tolerance": spec.goal_tolerance,
            "rot_tolerance": spec.rot_tolerance if spec.rot_tolerance is not None
            else _FAMILY_ROT_TOL[spec.family],
        }
        if template is not None:
            metadata["cluster_template"] = template
            metadata["enclosed_goal"] = enclosed_idx
        return Task(goals=goals, scene=CollisionScene(obstacles, margin=MARGIN),
                    base_region=_default_region(), gravity=GRAVITY.copy(),
                    seed=spec.seed, metadata=metadata)
    raise RuntimeError(f"task generation failed after {max_tries} tries "
                       f"({spec.family} #{index})")


def write_tasks(tasks: Sequence[Task], out_dir: Path,
                spec: FamilySpec) -> Path:
    """Write task files plus a manifest with checksums; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for task in tasks:
        name = f"{spec.family}_{task.metadata['index']:03d}.json"
        path = out_dir / name
        task.save(path)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        entries.append({"file": name, "sha256": digest})
    manifest = {"family": spec.family, "count": spec.count, "seed": spec.seed,
                "tasks": entries}
    manifest_path = out_dir / f"manifest_{spec.family}_{spec.seed}.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest_path
