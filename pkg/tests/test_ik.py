import math

import numpy as np
import pytest

from modco.catalog import Assembly, JointSpec
from modco.collision import CollisionScene, Shape, clear_mask
from modco.ik import (IkResult, decode_ik_gene, decode_ik_vector,
                      encode_ik_gene, pose_distance, solve_ik)
from modco.robot import RobotInstance
from modco.spatial import Pose, Projection, ProjectionKind, cube_tolerance
from modco.task import ReachGoal, goal_satisfied
from modco.robot import JointState

from conftest import planar_catalog


def make_2r():
    catalog = planar_catalog(q_lim=math.pi)
    return RobotInstance(Assembly(["base_t", "joint_t", "link_t", "joint_t",
                                   "link_t", "eef_t"]), catalog)


def free_rotation_goal(position, width=0.02):
    tols = cube_tolerance(width) + [Projection(ProjectionKind.ROT_ANGLE, (0.0, math.pi))]
    return ReachGoal(Pose.from_translation(position), tuple(tols))


def reachable_2r(x, y, l1=0.5, l2=0.5):
    r = math.hypot(x, y)
    return abs(l1 - l2) + 1e-9 <= r <= l1 + l2 - 1e-9


def closed_form_2r(x, y, l1=0.5, l2=0.5):
    # elbow-up/down solutions; oracle for reachability and reference angles
    r2 = x * x + y * y
    c2 = (r2 - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    c2 = max(-1.0, min(1.0, c2))
    sols = []
    for sign in (1.0, -1.0):
        q2 = sign * math.acos(c2)
        q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
        sols.append((q1, q2))
    return sols


def test_already_solved_at_seed():
    robot = make_2r()
    seed = np.array([0.4, -0.7])
    eef = robot.eef_world(seed)
    goal = ReachGoal(eef, tuple(cube_tolerance(0.02)
                                + [Projection(ProjectionKind.ROT_ANGLE, (0.0, 0.1))]))
    res = solve_ik(robot, goal, seed, budget=100)
    assert res.satisfied
    assert res.iterations_used <= 1
    assert res.residual < 1e-9


def test_unreachable_goal_residual_bound():
    robot = make_2r()
    target = np.array([2.5, 0.0, 0.1])
    goal = free_rotation_goal(target)
    rng = np.random.default_rng(40)
    res = solve_ik(robot, goal, np.zeros(2), budget=150, rng=rng)
    assert not res.satisfied
    # reach from the base flange is at most l1+l2 = 1.0 plus base offset
    distance = np.linalg.norm(target)
    assert res.residual >= distance - 1.2


def test_2r_annulus_success_rate():
    robot = make_2r()
    rng = np.random.default_rng(41)
    solved = total = 0
    while total < 60:
        x, y = rng.uniform(-1, 1, 2)
        if not reachable_2r(x, y):
            continue
        assert closed_form_2r(x, y)  # oracle agrees the target is reachable
        total += 1
        goal = free_rotation_goal((x, y, 0.1))
        seed = rng.uniform(robot.q_min, robot.q_max)
        res = solve_ik(robot, goal, seed, budget=200, rng=rng)
        solved += res.satisfied
        if res.satisfied:
            assert goal_satisfied(goal, robot, JointState.rest(res.q))
    assert solved / total >= 0.95


def test_residual_monotone_vs_seed():
    # best-so-far contract: a failed search never reports a residual worse
    # than the seed's (a satisfied result reports its own solution distance)
    robot = make_2r()
    rng = np.random.default_rng(42)
    checked = 0
    for _ in range(30):
        seed = rng.uniform(robot.q_min, robot.q_max)
        goal = free_rotation_goal(rng.uniform(-0.8, 0.8, 3) * np.array([1, 1, 0]) + np.array([0, 0, 0.1]))
        axes, origins, eef_r, eef_t = robot.fk_query(seed)
        d_seed = pose_distance(goal, eef_r, eef_t)
        res = solve_ik(robot, goal, seed, budget=5)
        if not res.satisfied:
            assert res.residual <= d_seed + 1e-12
            checked += 1
    assert checked > 5


def test_collision_aware_results_are_clear():
    robot = make_2r()
    # obstacle covering part of the reachable ring
    scene = CollisionScene([Shape.box((0.4, 0.4, 0.6),
                                      Pose.from_translation((0.6, 0.3, 0.2)))],
                           margin=0.01)
    rng = np.random.default_rng(43)
    satisfied = 0
    for _ in range(20):
        x, y = rng.uniform(-1, 1, 2)
        if not reachable_2r(x, y):
            continue
        goal = free_rotation_goal((x, y, 0.1))
        res = solve_ik(robot, goal, rng.uniform(robot.q_min, robot.q_max),
                       budget=300, avoid_collisions=True, scene=scene, rng=rng)
        if res.satisfied:
            satisfied += 1
            assert clear_mask(robot, res.q, scene)[0]
    assert satisfied > 0


def test_joint_limits_respected():
    robot = make_2r()
    rng = np.random.default_rng(44)
    for _ in range(10):
        goal = free_rotation_goal(rng.uniform(-0.9, 0.9, 2).tolist() + [0.1])
        res = solve_ik(robot, goal, rng.uniform(robot.q_min, robot.q_max),
                       budget=100, rng=rng)
        assert (res.q >= robot.q_min - 1e-12).all()
        assert (res.q <= robot.q_max + 1e-12).all()


JOINT = JointSpec(axis=(0, 0, 1), q_min=-math.pi, q_max=math.pi, v_max=1,
                  a_max=1, tau_max=1)


def test_decode_midpoint():
    assert decode_ik_gene(0.5, JOINT) == pytest.approx(0.0, abs=1e-15)


def test_decode_lower_endpoint():
    j = JointSpec(axis=(0, 0, 1), q_min=-1, q_max=2, v_max=1, a_max=1, tau_max=1)
    assert decode_ik_gene(0.0, j) == pytest.approx(-1.0)


def test_decode_affine():
    j = JointSpec(axis=(0, 0, 1), q_min=-2, q_max=2, v_max=1, a_max=1, tau_max=1)
    assert decode_ik_gene(0.25, j) == pytest.approx(-1.0)


def test_decode_clamps_out_of_range():
    assert decode_ik_gene(1.7, JOINT) == pytest.approx(JOINT.q_max)
    assert decode_ik_gene(-0.3, JOINT) == pytest.approx(JOINT.q_min)


def test_encode_decode_round_trip():
    rng = np.random.default_rng(45)
    for _ in range(200):
        lo, width = rng.uniform(-3, 0), rng.uniform(0.5, 4)
        j = JointSpec(axis=(0, 0, 1), q_min=lo, q_max=lo + width, v_max=1,
                      a_max=1, tau_max=1)
        rho = rng.random()
        q = decode_ik_gene(rho, j)
        assert encode_ik_gene(q, j) == pytest.approx(rho, abs=1e-12)
        assert decode_ik_gene(encode_ik_gene(q, j), j) == pytest.approx(q, abs=1e-12)


def test_decode_vector():
    out = decode_ik_vector([0.0, 1.0], [JOINT, JOINT])
    np.testing.assert_allclose(out, [-math.pi, math.pi])
