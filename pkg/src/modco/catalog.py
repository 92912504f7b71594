"""Module type definitions, availability accounting and assembly validity.

A catalog is loaded once from a module-set JSON file and shared read-only.
Assemblies are plain ordered id lists; all invariant checking lives in
:func:`validate_assembly` so that partially built or deliberately broken
assemblies can still be constructed (the genetic operators need that).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .spatial import Pose


class ModuleKind(enum.Enum):
    BASE = "base"
    JOINT = "joint"
    LINK = "link"
    EEF = "eef"


class SizeClass(enum.Enum):
    SMALL = "small"
    BIG = "big"


@dataclass(frozen=True)
class JointSpec:
    """Actuation data of a revolute joint, axis given in the motor frame."""

    axis: Tuple[float, float, float]
    q_min: float
    q_max: float
    v_max: float
    a_max: float
    tau_max: float
    motor_frame: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if not (self.q_min < self.q_max):
            raise ValueError("joint needs q_min < q_max")
        if min(self.v_max, self.a_max, self.tau_max) <= 0:
            raise ValueError("joint rate/torque limits must be positive")


@dataclass(frozen=True)
class ModuleType:
    id: str
    kind: ModuleKind
    size_class: SizeClass
    length: float                       # straight-line over-approximation d
    mass: float
    com: np.ndarray                     # in the proximal-flange frame
    inertia: np.ndarray                 # 3x3 about com, proximal-flange frame
    proximal_frame: Pose = field(default_factory=Pose.identity)
    distal_frame: Pose = field(default_factory=Pose.identity)
    joint: Optional[JointSpec] = None
    body_radius: float = 0.05           # capsule radius for collision
    # explicit capsule endpoints (proximal frame); default spans the flanges
    capsule_ends: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float))
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float))
        if self.capsule_ends is not None:
            ends = (np.asarray(self.capsule_ends[0], dtype=float),
                    np.asarray(self.capsule_ends[1], dtype=float))
            object.__setattr__(self, "capsule_ends", ends)
        if self.mass < 0:
            raise ValueError(f"module {self.id}: negative mass")
        span = (self.proximal_frame.inverse() @ self.distal_frame).t
        if self.length + 1e-12 < float(np.linalg.norm(span)):
            raise ValueError(f"module {self.id}: length under-approximates flange span")
        if (self.kind is ModuleKind.JOINT) != (self.joint is not None):
            raise ValueError(f"module {self.id}: joint data and kind disagree")

    def flange_transform(self) -> Pose:
        """Proximal-to-distal transform with the joint (if any) at zero."""
        return self.proximal_frame.inverse() @ self.distal_frame


def _pose_from_json(obj: dict) -> Pose:
    return Pose.from_json(obj)


def module_from_json(obj: dict) -> ModuleType:
    joint = None
    if "joint" in obj and obj["joint"] is not None:
        j = obj["joint"]
        joint = JointSpec(axis=tuple(j["axis"]), q_min=float(j["q_min"]),
                          q_max=float(j["q_max"]), v_max=float(j["v_max"]),
                          a_max=float(j["a_max"]), tau_max=float(j["tau_max"]),
                          motor_frame=_pose_from_json(j.get("motor", {"q": [1, 0, 0, 0], "t": [0, 0, 0]})))
    collision = obj.get("collision", {})
    capsule_ends = None
    if "p0" in collision and "p1" in collision:
        capsule_ends = (np.asarray(collision["p0"], dtype=float),
                        np.asarray(collision["p1"], dtype=float))
    return ModuleType(
        id=obj["id"],
        kind=ModuleKind(obj["kind"]),
        size_class=SizeClass(obj["size_class"]),
        length=float(obj["length"]),
        mass=float(obj["mass"]),
        com=np.asarray(obj["com"], dtype=float),
        inertia=np.asarray(obj["inertia"], dtype=float),
        proximal_frame=_pose_from_json(obj.get("proximal", {"q": [1, 0, 0, 0], "t": [0, 0, 0]})),
        distal_frame=_pose_from_json(obj["distal"]),
        joint=joint,
        body_radius=float(collision.get("radius", 0.05)),
        capsule_ends=capsule_ends,
    )


class ModuleCatalog:
    """Immutable set of module types plus per-type availability counts."""

    def __init__(self, types: Sequence[ModuleType],
                 availability: Optional[Dict[str, Union[int, float]]] = None):
        self.types: Dict[str, ModuleType] = {m.id: m for m in types}
        if len(self.types) != len(types):
            raise ValueError("duplicate module ids in catalog")
        self.availability: Dict[str, Union[int, float]] = dict(availability or {})
        for mid in self.availability:
            if mid not in self.types:
                raise KeyError(f"availability for unknown module id {mid!r}")

    def __contains__(self, module_id: str) -> bool:
        return module_id in self.types

    def __getitem__(self, module_id: str) -> ModuleType:
        try:
            return self.types[module_id]
        except KeyError:
            raise KeyError(f"unknown module id {module_id!r}") from None

    def available(self, module_id: str) -> Union[int, float]:
        return self.availability.get(module_id, math.inf)

    def ids_of_kind(self, *kinds: ModuleKind) -> List[str]:
        return sorted(m.id for m in self.types.values() if m.kind in kinds)

    def compatible(self, upper_id: str, lower_id: str) -> bool:
        """Flange compatibility: equal size class at the connection."""
        return self[upper_id].size_class is self[lower_id].size_class

    def with_availability(self, overrides: Dict[str, Union[int, float]]) -> "ModuleCatalog":
        merged = dict(self.availability)
        merged.update(overrides)
        return ModuleCatalog(list(self.types.values()), merged)

    def to_json(self) -> dict:
        mods = []
        for m in self.types.values():
            collision = {"kind": "capsule", "radius": m.body_radius}
            if m.capsule_ends is not None:
                collision["p0"] = [float(v) for v in m.capsule_ends[0]]
                collision["p1"] = [float(v) for v in m.capsule_ends[1]]
            obj = {
                "id": m.id, "kind": m.kind.value, "size_class": m.size_class.value,
                "length": m.length, "mass": m.mass,
                "com": [float(v) for v in m.com],
                "inertia": [[float(v) for v in row] for row in m.inertia],
                "proximal": m.proximal_frame.to_json(),
                "distal": m.distal_frame.to_json(),
                "collision": collision,
            }
            if m.joint is not None:
                j = m.joint
                obj["joint"] = {"axis": list(j.axis), "q_min": j.q_min, "q_max": j.q_max,
                                "v_max": j.v_max, "a_max": j.a_max, "tau_max": j.tau_max,
                                "motor": j.motor_frame.to_json()}
            mods.append(obj)
        avail = {k: ("inf" if math.isinf(v) else int(v)) for k, v in self.availability.items()}
        return {"modules": mods, "availability": avail}

    @staticmethod
    def from_json(obj: dict) -> "ModuleCatalog":
        types = [module_from_json(m) for m in obj["modules"]]
        avail: Dict[str, Union[int, float]] = {}
        for mid, count in obj.get("availability", {}).items():
            avail[mid] = math.inf if count == "inf" else int(count)
        return ModuleCatalog(types, avail)

    @staticmethod
    def load(path: Union[str, Path]) -> "ModuleCatalog":
        with open(path) as f:
            return ModuleCatalog.from_json(json.load(f))

    @staticmethod
    def default() -> "ModuleCatalog":
        """The shipped two-size module family."""
        data = resources.files("modco").joinpath("data/modules_default.json")
        return ModuleCatalog.from_json(json.loads(data.read_text()))


@dataclass(frozen=True)
class Assembly:
    """Ordered module ids, base to end effector. Empties are never stored."""

    module_ids: Tuple[str, ...]

    def __init__(self, module_ids: Sequence[str]):
        object.__setattr__(self, "module_ids", tuple(module_ids))

    def __len__(self) -> int:
        return len(self.module_ids)

    def __iter__(self):
        return iter(self.module_ids)

    def n_joints(self, catalog: ModuleCatalog) -> int:
        return sum(1 for mid in self.module_ids
                   if catalog[mid].kind is ModuleKind.JOINT)


def validate_assembly(assembly: Assembly, catalog: ModuleCatalog) -> List[str]:
    """Invariant check; returns a list of violations, empty when valid."""
    violations: List[str] = []
    ids = assembly.module_ids
    for mid in ids:
        if mid not in catalog:
            raise KeyError(f"unknown module id {mid!r}")
    if not ids:
        return ["assembly is empty"]
    if catalog[ids[0]].kind is not ModuleKind.BASE:
        violations.append(f"first module {ids[0]!r} is not a base")
    if catalog[ids[-1]].kind is not ModuleKind.EEF:
        violations.append(f"last module {ids[-1]!r} is not an end effector")
    for mid in ids[1:-1]:
        if catalog[mid].kind not in (ModuleKind.JOINT, ModuleKind.LINK):
            violations.append(f"interior module {mid!r} is a {catalog[mid].kind.value}")
    for upper, lower in zip(ids, ids[1:]):
        if not catalog.compatible(upper, lower):
            violations.append(f"size mismatch between {upper!r} and {lower!r}")
    return violations


def missing_module_cost(assembly: Assembly, catalog: ModuleCatalog) -> int:
    """Total per-type shortfall of the assembly against the catalog stock."""
    uses: Dict[str, int] = {}
    for mid in assembly:
        uses[mid] = uses.get(mid, 0) + 1
    missing = 0
    for mid, count in uses.items():
        avail = catalog.available(mid)
        if count > avail:
            missing += int(count - avail)
    return missing


def assembly_length(assembly: Assembly, catalog: ModuleCatalog) -> float:
    """Reach over-approximation: sum of module lengths."""
    return float(sum(catalog[mid].length for mid in assembly))
