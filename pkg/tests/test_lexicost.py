import math
from dataclasses import replace

import numpy as np
import pytest

from modco.catalog import Assembly, ModuleCatalog
from modco.collision import CollisionScene, Shape
from modco.config import default_config
from modco.lexicost import Candidate, LexCost, evaluate
from modco.planner import RoadmapStore, path_time_lower_bound
from modco.robot import RobotInstance
from modco.spatial import Pose, Projection, ProjectionKind, cube_tolerance
from modco.task import BaseRegion, ReachGoal, Task, solution_cost

from conftest import planar_catalog

NO_G = np.zeros(3)


def lex(*levels):
    return LexCost(tuple(tuple(float(v) for v in lvl) for lvl in levels))


def test_worked_ordering_example():
    # too-short robot loses to one-missing-IK loses to fully solved,
    # independent of the deeper entries of the first
    rng = np.random.default_rng(60)
    for _ in range(100):
        x = rng.uniform(-1e6, 1e6)
        j_r1 = lex((1,), (x,))
        j_r2 = lex((0,), (1,))
        j_r3 = lex((0,), (0,))
        assert j_r2 < j_r1
        assert j_r3 < j_r2
        assert j_r3 < j_r1


def test_second_entry_dominance():
    # more goals solved dominates any residual difference
    a = lex((0,), (2,), (-1, 0.3))
    b = lex((0,), (2,), (-2, 9.9))
    assert b < a


def test_equality_reflexive():
    a = lex((0,), (1,), (-2, 0.5))
    assert a == lex((0,), (1,), (-2, 0.5))
    assert not a < lex((0,), (1,), (-2, 0.5))


def test_shallower_depth_ranks_worse_on_tie():
    shallow = lex((0,), (0,))
    deep = lex((0,), (0,), (99.0,))
    assert deep < shallow
    # but an earlier strict difference still dominates regardless of depth
    assert lex((0,), (0,)) < lex((1,), (0,), (0,), (0,))


def test_schema_mismatch_raises():
    with pytest.raises(ValueError):
        lex((0, 1)).compare(lex((0,)))


def test_total_order_properties():
    rng = np.random.default_rng(61)

    def random_cost():
        depth = rng.integers(1, 5)
        levels = []
        arities = [1, 1, 2, 2]
        for d in range(depth):
            levels.append(tuple(float(rng.integers(-3, 4)) for _ in range(arities[d])))
        return lex(*levels)

    costs = [random_cost() for _ in range(300)]
    for _ in range(3000):
        a, b, c = (costs[i] for i in rng.integers(0, len(costs), 3))
        ab, ba = a.compare(b), b.compare(a)
        assert ab == -ba  # antisymmetry
        if ab <= 0 and b.compare(c) <= 0:
            assert a.compare(c) <= 0  # transitivity


def test_json_round_trip():
    a = lex((0,), (1,), (-2, 0.5))
    assert LexCost.from_json(a.to_json()) == a


# ----------------------------------------------------------------------
# end-to-end evaluation of the hierarchy


def small_m_config(**overrides):
    cfg = default_config("m")
    merged = dict(n_ik=60, n_ik_obs=120, t_plan=0.5)
    merged.update(overrides)
    return replace(cfg, **merged)


def planar_setup(goal_qs, obstacles=(), catalog=None):
    catalog = catalog or planar_catalog(q_lim=math.pi, tau_max=1e3)
    chain = ["base_t", "joint_t", "link_t", "joint_t", "link_t", "eef_t"]
    assembly = Assembly(chain)
    robot = RobotInstance(assembly, catalog)
    goals = []
    for q in goal_qs:
        tols = cube_tolerance(0.04) + [Projection(ProjectionKind.ROT_ANGLE,
                                                  (0.0, math.pi))]
        goals.append(ReachGoal(robot.eef_world(np.asarray(q)), tuple(tols)))
    region = BaseRegion(Pose.identity(), (("x", (-0.1, 0.1)), ("y", (-0.1, 0.1)),
                                          ("yaw", (-math.pi, math.pi))))
    task = Task(goals=goals, scene=CollisionScene(list(obstacles)),
                base_region=region, gravity=NO_G)
    return catalog, assembly, task


def test_evaluate_too_short_terminates_without_work():
    catalog, _, task = planar_setup([[0.0, 0.0]])
    # single-link arm: reach 0.1 (base) + 0.5 (one link) < goal at ~1.0
    short = Assembly(["base_t", "joint_t", "link_t", "eef_t"])
    far_goal = ReachGoal(Pose.from_translation((2.5, 0, 0.1)),
                         task.goals[0].tolerances)
    task_far = Task(goals=[far_goal], scene=task.scene,
                    base_region=task.base_region, gravity=NO_G)
    rng = np.random.default_rng(62)
    result = evaluate(Candidate(short, Pose.identity()), task_far, catalog,
                      small_m_config(), rng=rng)
    assert result.cost.depth == 2
    assert result.cost.levels[1] == (1.0,)
    # hierarchical elimination: no IK, planning or timing work happened
    assert result.counters.ik_iters == 0
    assert result.counters.plan_iters == 0
    assert result.counters.topp_grid_points == 0


def test_evaluate_invalid_assembly_pre_level():
    catalog, _, task = planar_setup([[0.0, 0.0]])
    bad = Assembly(["joint_t", "eef_t"])
    rng = np.random.default_rng(63)
    result = evaluate(Candidate(bad, Pose.identity()), task, catalog,
                      small_m_config(), rng=rng)
    assert result.cost.depth == 1
    assert result.cost.levels[0][0] >= 1.0
    assert result.counters.ik_iters == 0


def test_evaluate_missing_modules():
    catalog, assembly, task = planar_setup([[0.0, 0.0]])
    task.availability = {"joint_t": 1}
    rng = np.random.default_rng(64)
    result = evaluate(Candidate(assembly, Pose.identity()), task, catalog,
                      small_m_config(), rng=rng)
    assert result.cost.depth == 3
    assert result.cost.levels[2] == (1.0,)
    assert result.counters.ik_iters == 0


def test_evaluate_full_success_two_goals():
    catalog, assembly, task = planar_setup([[0.2, 0.4], [1.2, -0.6]])
    rng = np.random.default_rng(65)
    result = evaluate(Candidate(assembly, Pose.identity()), task, catalog,
                      small_m_config(), roadmaps=RoadmapStore(), rng=rng)
    assert result.cost.depth == 9
    violated, unmet, cycle = result.cost.levels[-1]
    assert (violated, unmet) == (0.0, 0.0)
    assert cycle > 0
    assert result.solved
    # timing never undercuts the planner's lower bound
    ft = -1.0
    robot = result.robot
    ft = sum(path_time_lower_bound(p, robot.v_max) for p in result.paths if p)
    t_end = sum(l.duration for l in result.legs if l)
    assert t_end >= ft - 1e-9
    # the final level reproduces an independent audit of the trajectory
    audit = solution_cost(task, robot, result.solution.times,
                          result.solution.q, result.solution.qd,
                          result.solution.qdd)
    assert audit.triple[0] == violated
    assert audit.triple[1] == unmet
    assert audit.triple[2] == pytest.approx(cycle)


def test_evaluate_single_goal_depth_full():
    catalog, assembly, task = planar_setup([[0.5, -0.3]])
    rng = np.random.default_rng(66)
    result = evaluate(Candidate(assembly, Pose.identity()), task, catalog,
                      small_m_config(), rng=rng)
    assert result.cost.depth == 9
    assert result.cost.levels[-1][2] == 0.0  # single reach goal: zero cycle time


def test_evaluate_unreachable_goals_stop_after_l4():
    catalog, assembly, task = planar_setup([[0.2, 0.2]])
    # planar arm cannot leave z = 0.1 although the length check passes
    task.goals[0] = ReachGoal(Pose.from_translation((0.7, 0.0, 0.5)),
                              task.goals[0].tolerances)
    rng = np.random.default_rng(67)
    result = evaluate(Candidate(assembly, Pose.identity()), task, catalog,
                      small_m_config(n_ik=30, n_ik_obs=40), rng=rng)
    assert result.cost.depth == 5
    assert result.cost.levels[3][0] == 0.0   # no goal solved at L3
    assert result.counters.plan_iters == 0


def test_evaluate_gene_scope_uses_seeds_directly():
    catalog, assembly, task = planar_setup([[0.3, -0.9]])
    robot = RobotInstance(assembly, catalog)
    cfg = default_config("mbq")
    q_good = np.array([0.3, -0.9])
    seeds = q_good[None, :]
    rng = np.random.default_rng(68)
    result = evaluate(Candidate(assembly, Pose.identity(), ik_seeds=seeds),
                      task, catalog, cfg, rng=rng)
    assert result.cost.depth == 9
    assert result.cost.levels[3][0] == -1.0
    # a bad seed is judged as-is: no solver iterations are spent on it
    seeds_bad = np.array([[1.5, 1.5]])
    result_bad = evaluate(Candidate(assembly, Pose.identity(), ik_seeds=seeds_bad),
                          task, catalog, cfg, rng=rng)
    assert result_bad.cost.levels[3][0] == 0.0
    assert result_bad.cost.depth == 5
    assert result_bad.counters.ik_iters <= 2


def test_evaluate_obstacle_blocks_l4():
    # goal pose reachable but engulfed by an obstacle: L3 solves, L4 cannot
    catalog, assembly, task = planar_setup(
        [[0.0, 0.0]],
        obstacles=[Shape.sphere((1.1, 0.0, 0.1), 0.25)])
    rng = np.random.default_rng(69)
    result = evaluate(Candidate(assembly, Pose.identity()), task, catalog,
                      small_m_config(n_ik=150, n_ik_obs=150), rng=rng)
    assert result.cost.depth == 5
    assert result.cost.levels[3][0] == -1.0  # obstacle-blind IK succeeds
    assert result.cost.levels[4][0] == 0.0   # collision-aware IK cannot
