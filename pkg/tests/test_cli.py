import json
import math
from pathlib import Path

import numpy as np
import pytest

from modco.catalog import ModuleCatalog
from modco.cli import main
from modco.solutions import SolutionRecord
from modco.task import Task


def test_generate_writes_files_and_manifest(tmp_path):
    out = tmp_path / "tasks"
    rc = main(["generate", "--family", "simple", "--count", "3", "--seed", "1",
               "--out", str(out)])
    assert rc == 0
    files = sorted(out.glob("simple_*.json"))
    assert len(files) == 3
    manifest = json.loads((out / "manifest_simple_1.json").read_text())
    assert manifest["count"] == 3
    assert len(manifest["tasks"]) == 3


def test_generate_rerun_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["generate", "--family", "edge", "--count", "2",
                     "--seed", "9", "--out", str(out)]) == 0
    for fa, fb in zip(sorted(a.glob("*.json")), sorted(b.glob("*.json"))):
        assert fa.read_bytes() == fb.read_bytes()


def test_generate_bad_count(tmp_path):
    rc = main(["generate", "--family", "simple", "--count", "0",
               "--out", str(tmp_path)])
    assert rc == 3


def make_easy_task(tmp_path):
    # a close pair of goals the default catalog solves quickly
    from modco.spatial import Pose, Projection, ProjectionKind, cube_tolerance
    from modco.task import BaseRegion, ReachGoal
    from modco.collision import CollisionScene
    from modco.robot import GRAVITY
    tols = tuple(cube_tolerance(0.12)
                 + [Projection(ProjectionKind.ROT_ANGLE, (0.0, math.pi))])
    goals = [ReachGoal(Pose.from_translation((0.45, 0.1, 0.45)), tols),
             ReachGoal(Pose.from_translation((0.3, -0.3, 0.5)), tols)]
    region = BaseRegion(Pose.identity(), (("x", (-0.2, 0.2)), ("y", (-0.2, 0.2)),
                                          ("yaw", (-math.pi, math.pi))))
    task = Task(goals=goals, scene=CollisionScene([]), base_region=region,
                gravity=GRAVITY.copy())
    path = tmp_path / "task.json"
    task.save(path)
    return path


def test_optimize_validate_stress_pipeline(tmp_path):
    task_path = make_easy_task(tmp_path)
    out = tmp_path / "run"
    rc = main(["optimize", "--task", str(task_path), "--scope", "mbq",
               "--budget", "90", "--seed", "4", "--out", str(out)])
    assert (out / "log.jsonl").is_file()
    assert (out / "solution.json").is_file()
    record = SolutionRecord.load(out / "solution.json")
    if rc == 0:
        assert record.solved
        # independent validation agrees
        rc_val = main(["validate", "--solution", str(out / "solution.json"),
                       "--task", str(task_path)])
        assert rc_val == 0
        # stress with zero perturbation: everything stays valid
        csv_path = tmp_path / "stress.csv"
        rc_stress = main(["stress", "--solution", str(out / "solution.json"),
                          "--task", str(task_path), "--variants", "4",
                          "--shift", "0.0", "--tilt", "0deg",
                          "--out", str(csv_path)])
        assert rc_stress == 0
        lines = csv_path.read_text().strip().split("\n")
        assert len(lines) == 5  # header + 4 variants
        assert all(line.split(",")[2] == "still_valid" for line in lines[1:])
    else:
        assert rc == 2  # unsolved is a legitimate, flagged outcome


def test_optimize_missing_module_file(tmp_path):
    task_path = make_easy_task(tmp_path)
    rc = main(["optimize", "--task", str(task_path), "--scope", "m",
               "--budget", "1", "--seed", "1", "--modules", "/nonexistent.json",
               "--out", str(tmp_path / "x")])
    assert rc == 3


def test_optimize_deterministic_logs(tmp_path):
    task_path = make_easy_task(tmp_path)
    logs = []
    for rep in range(2):
        out = tmp_path / f"rep{rep}"
        main(["optimize", "--task", str(task_path), "--scope", "m",
              "--budget", "2", "--seed", "7", "--workers", "1",
              "--out", str(out)])
        logs.append((out / "log.jsonl").read_bytes())
    assert logs[0] == logs[1]


def test_validate_detects_corruption(tmp_path):
    task_path = make_easy_task(tmp_path)
    out = tmp_path / "run"
    rc = main(["optimize", "--task", str(task_path), "--scope", "mbq",
               "--budget", "90", "--seed", "4", "--out", str(out)])
    if rc != 0:
        pytest.skip("optimizer did not solve the easy task in budget")
    sol = json.loads((out / "solution.json").read_text())
    q = np.asarray(sol["trajectory"]["q"], dtype=float)
    q[len(q) // 2] += 2.0  # teleport one waypoint
    sol["trajectory"]["q"] = q.tolist()
    corrupted = tmp_path / "corrupted.json"
    corrupted.write_text(json.dumps(sol))
    rc_val = main(["validate", "--solution", str(corrupted),
                   "--task", str(task_path)])
    assert rc_val == 2


def test_stats_convergence_and_compare(tmp_path):
    # synthetic paired logs for two "scopes"
    import json as _json
    for scope, cost in (("a", 4.0), ("b", 3.2)):
        for k in range(4):
            d = tmp_path / scope / f"task_{k}"
            d.mkdir(parents=True)
            records = [{"t": 1.0, "solved": False, "cycle_time": None},
                       {"t": 5.0, "solved": True, "cycle_time": cost + 0.1 * k}]
            with open(d / "log.jsonl", "w") as f:
                for r in records:
                    f.write(_json.dumps(r) + "\n")
    out_csv = tmp_path / "conv.csv"
    rc = main(["stats", "convergence", "--logs",
               str(tmp_path / "a" / "*" / "log.jsonl"),
               "--grid-step", "2", "--out", str(out_csv)])
    assert rc == 0
    assert out_csv.read_text().startswith("t,mean_cost")
    rc = main(["stats", "compare", "--a", str(tmp_path / "a"),
               "--b", str(tmp_path / "b")])
    assert rc == 0
