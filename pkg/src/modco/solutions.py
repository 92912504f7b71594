"""Solution files: everything needed to replay, validate and repair a result."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .catalog import Assembly, ModuleCatalog
from .lexicost import Evaluation, LexCost
from .planner import JointPath
from .robot import RobotInstance
from .spatial import Pose
from .timing import Trajectory


@dataclass
class SolutionRecord:
    assembly_ids: List[str]
    base: Pose
    lexcost: LexCost
    ik_solutions: List[Optional[np.ndarray]]
    paths: List[Optional[JointPath]]
    trajectory: Optional[Trajectory]
    scope: str = ""
    seed: int = 0
    task_file: str = ""
    meter_seconds: float = 0.0

    @property
    def solved(self) -> bool:
        return self.lexcost.solved

    def robot(self, catalog: ModuleCatalog) -> RobotInstance:
        return RobotInstance(Assembly(self.assembly_ids), catalog, base=self.base)

    def to_json(self) -> dict:
        return {
            "assembly": list(self.assembly_ids),
            "base": self.base.to_json(),
            "lexcost": self.lexcost.to_json(),
            "solved": self.solved,
            "ik_solutions": [None if q is None else [float(v) for v in q]
                             for q in self.ik_solutions],
            "paths": [None if p is None else p.to_json() for p in self.paths],
            "trajectory": None if self.trajectory is None else self.trajectory.to_json(),
            "scope": self.scope,
            "seed": self.seed,
            "task_file": self.task_file,
            "meter_seconds": self.meter_seconds,
        }

    @staticmethod
    def from_json(obj: dict) -> "SolutionRecord":
        paths = []
        for p in obj.get("paths", []):
            if p is None:
                paths.append(None)
            else:
                arr = np.asarray(p, dtype=float)
                paths.append(JointPath(arr) if len(arr) > 1 else _trivial(arr))
        return SolutionRecord(
            assembly_ids=list(obj["assembly"]),
            base=Pose.from_json(obj["base"]),
            lexcost=LexCost.from_json(obj["lexcost"]),
            ik_solutions=[None if q is None else np.asarray(q, dtype=float)
                          for q in obj.get("ik_solutions", [])],
            paths=paths,
            trajectory=None if obj.get("trajectory") is None
            else Trajectory.from_json(obj["trajectory"]),
            scope=obj.get("scope", ""),
            seed=int(obj.get("seed", 0)),
            task_file=obj.get("task_file", ""),
            meter_seconds=float(obj.get("meter_seconds", 0.0)),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True))

    @staticmethod
    def load(path: Union[str, Path]) -> "SolutionRecord":
        return SolutionRecord.from_json(json.loads(Path(path).read_text()))

    @staticmethod
    def from_evaluation(evaluation: Evaluation, scope: str = "", seed: int = 0,
                        task_file: str = "", meter_seconds: float = 0.0) -> "SolutionRecord":
        robot = evaluation.robot
        return SolutionRecord(
            assembly_ids=list(robot.assembly.module_ids) if robot else [],
            base=robot.base if robot else Pose.identity(),
            lexcost=evaluation.cost,
            ik_solutions=list(evaluation.ik_solutions),
            paths=list(evaluation.paths),
            trajectory=evaluation.solution,
            scope=scope, seed=seed, task_file=task_file,
            meter_seconds=meter_seconds,
        )


def _trivial(arr: np.ndarray) -> JointPath:
    from .planner import trivial_path
    return trivial_path(arr[0])
