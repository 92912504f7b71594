import math
from dataclasses import replace

import numpy as np
import pytest

from modco.catalog import Assembly, ModuleCatalog, ModuleKind
from modco.collision import CollisionScene
from modco.config import default_config
from modco.ga import (EMPTY, Genome, crossover, decode, init_population,
                      lamarckian_writeback, mutate, rank_weights, run,
                      select_parents)
from modco.lexicost import LexCost, evaluate, Candidate
from modco.planner import RoadmapStore
from modco.robot import RobotInstance
from modco.spatial import Pose, Projection, ProjectionKind, cube_tolerance
from modco.task import BaseRegion, ReachGoal, Task

from conftest import planar_catalog

NO_G = np.zeros(3)


def planar_task(goal_qs, catalog=None, n_base=3):
    catalog = catalog or planar_catalog(q_lim=math.pi, tau_max=1e3)
    probe = RobotInstance(Assembly(["base_t", "joint_t", "link_t", "joint_t",
                                    "link_t", "eef_t"]), catalog)
    goals = []
    for q in goal_qs:
        tols = cube_tolerance(0.06) + [Projection(ProjectionKind.ROT_ANGLE,
                                                  (0.0, math.pi))]
        goals.append(ReachGoal(probe.eef_world(np.asarray(q)), tuple(tols)))
    dims = [("x", (-0.2, 0.2)), ("y", (-0.2, 0.2)), ("yaw", (-math.pi, math.pi))]
    region = BaseRegion(Pose.identity(), tuple(dims[:n_base]))
    return catalog, Task(goals=goals, scene=CollisionScene([]),
                         base_region=region, gravity=NO_G)


def test_init_population_mean_dof():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = default_config("mbq")   # n_pop=35, n_genes=18, n_dof_init=8
    rng = np.random.default_rng(70)
    population = init_population(cfg, task, catalog, rng)
    assert len(population) == 35
    dofs = []
    for _ in range(1000 // 35 + 1):
        for g in init_population(cfg, task, catalog, rng):
            dofs.append(sum(1 for m in g.modules
                            if m != EMPTY and catalog[m].kind is ModuleKind.JOINT))
    mean = np.mean(dofs)
    assert 7.5 <= mean <= 8.5


def test_init_population_minimal_genes():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = replace(default_config("mbq"), n_genes=3, n_dof_init=1)
    rng = np.random.default_rng(71)
    for genome in init_population(cfg, task, catalog, rng):
        assert catalog[genome.modules[0]].kind is ModuleKind.BASE
        assert catalog[genome.modules[-1]].kind is ModuleKind.EEF
        assert len(genome.modules) == 3


def test_init_population_scope_m_has_no_extra_genes():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = default_config("m")
    rng = np.random.default_rng(72)
    for genome in init_population(cfg, task, catalog, rng):
        assert genome.base_genes is None
        assert genome.ik_genes is None


def test_mutate_identity_when_all_rates_zero():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = replace(default_config("mbq"), p_mutate=0.0, sigma_base=1e-12,
                  sigma_ik=1e-12)
    rng = np.random.default_rng(73)
    genome = init_population(cfg, task, catalog, rng)[0]
    out = mutate(genome, replace(cfg, sigma_base=0.0, sigma_ik=0.0), catalog, rng)
    assert out.modules == genome.modules
    np.testing.assert_array_equal(out.base_genes, genome.base_genes)
    np.testing.assert_array_equal(out.ik_genes, genome.ik_genes)


def test_mutate_rate_binomial_mean():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = replace(default_config("mbq"), n_genes=18, p_mutate=0.08)
    rng = np.random.default_rng(74)
    genome = init_population(cfg, task, catalog, rng)[0]
    changed_interior = []
    for _ in range(10_000):
        out = mutate(genome, cfg, catalog, rng)
        flips = sum(1 for a, b in zip(genome.modules[1:-1], out.modules[1:-1])
                    if a != b)
        changed_interior.append(flips)
    mean = np.mean(changed_interior)
    # binomial oracle: 16 interior slots at 0.08 -> 1.28 mutated slots
    assert 1.15 <= mean <= 1.41


def test_mutate_clips_scalar_genes():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = replace(default_config("mbq"), sigma_base=5.0, sigma_ik=5.0)
    rng = np.random.default_rng(75)
    genome = init_population(cfg, task, catalog, rng)[0]
    out = mutate(genome, cfg, catalog, rng)
    assert (out.base_genes >= 0).all() and (out.base_genes <= 1).all()
    assert (out.ik_genes >= 0).all() and (out.ik_genes <= 1).all()


def test_mutate_never_empties_ends():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = replace(default_config("mbq"), p_mutate=1.0, p_empty=0.99)
    rng = np.random.default_rng(76)
    genome = init_population(cfg, task, catalog, rng)[0]
    for _ in range(200):
        out = mutate(genome, cfg, catalog, rng)
        assert catalog[out.modules[0]].kind is ModuleKind.BASE
        assert catalog[out.modules[-1]].kind is ModuleKind.EEF


class _FixedCut:
    """rng stub driving the crossover cut deterministically."""

    def __init__(self, cut):
        self.cut = cut

    def integers(self, lo, hi):
        assert lo <= self.cut < hi
        return self.cut


def test_crossover_cut_zero_swaps_parents():
    catalog, task = planar_task([[0.2, 0.2], [0.4, -0.2]])
    cfg = default_config("mbq")
    rng = np.random.default_rng(77)
    a, b = init_population(cfg, task, catalog, rng)[:2]
    c1, c2 = crossover(a, b, _FixedCut(0))
    assert c1.modules == b.modules and c2.modules == a.modules
    np.testing.assert_array_equal(c1.base_genes, b.base_genes)
    np.testing.assert_array_equal(c2.ik_genes, a.ik_genes)


def test_crossover_identical_parents():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = default_config("mbq")
    rng = np.random.default_rng(78)
    a = init_population(cfg, task, catalog, rng)[0]
    for cut in range(len(a.modules) + 2):
        c1, c2 = crossover(a, a.copy(), _FixedCut(cut))
        assert c1.modules == a.modules and c2.modules == a.modules
        np.testing.assert_array_equal(c1.ik_genes, a.ik_genes)


def test_crossover_slots_verbatim():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = default_config("mbq")
    rng = np.random.default_rng(79)
    a, b = init_population(cfg, task, catalog, rng)[:2]
    for _ in range(100):
        c1, c2 = crossover(a, b, rng)
        for slot in range(len(a.modules)):
            src1 = a if c1.modules[slot] == a.modules[slot] else b
            assert c1.modules[slot] == src1.modules[slot]
            for child in (c1, c2):
                row = child.ik_genes[slot]
                assert (np.array_equal(row, a.ik_genes[slot])
                        or np.array_equal(row, b.ik_genes[slot]))


def test_hidden_genes_do_not_affect_decoding():
    catalog, task = planar_task([[0.2, 0.2], [0.5, -0.5]])
    cfg = replace(default_config("mbq"), n_genes=6)
    rng = np.random.default_rng(80)
    genome = init_population(cfg, task, catalog, rng)[0]
    genome.modules = ["base_t", "joint_t", EMPTY, "link_t", "joint_t", "eef_t"]
    twin = genome.copy()
    # perturb genes only at joint-less slots (hidden)
    for slot in (0, 2, 3, 5):
        twin.ik_genes[slot] = rng.random(2)
    c1 = decode(genome, task, catalog, cfg)
    c2 = decode(twin, task, catalog, cfg)
    assert c1.assembly.module_ids == c2.assembly.module_ids
    np.testing.assert_array_equal(c1.ik_seeds, c2.ik_seeds)


def test_unhide_and_hide_through_crossover():
    # two-parent scenario: the child re-expresses a gene that was hidden
    # under a link and hides one that was expressed under a joint
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = replace(default_config("mbq"), n_genes=4)
    rng = np.random.default_rng(81)
    p1, p2 = init_population(cfg, task, catalog, rng)[:2]
    p1.modules = ["base_t", "link_t", "joint_t", "eef_t"]
    p2.modules = ["base_t", "joint_t", "link_t", "eef_t"]
    p1.ik_genes[:] = 0.25   # slot 1 value hidden (link), slot 2 expressed
    p2.ik_genes[:] = 0.75   # slot 1 value expressed (joint), slot 2 hidden
    # cut after the base block and slot 0 -> slots 1+ come from the other side
    c1, _ = crossover(p1, p2, _FixedCut(2))
    assert c1.modules == ["base_t", "joint_t", "link_t", "eef_t"]
    seeds = decode(c1, task, catalog, cfg).ik_seeds
    # slot 1 now holds a joint: the 0.75 gene is expressed again
    expressed = seeds[0, 0]
    spec = catalog["joint_t"].joint
    assert expressed == pytest.approx((1 - 0.75) * spec.q_min + 0.75 * spec.q_max)
    # p1's expressed slot-2 gene (0.25) is hidden in the child (link there)
    assert seeds.shape[1] == 1


def test_rank_weights_extremes():
    w = rank_weights(2, 2.0)
    np.testing.assert_allclose(w, [1.0, 0.0])
    w = rank_weights(5, 1.0)
    np.testing.assert_allclose(w, np.full(5, 0.2))


def test_select_parents_extreme_pressure():
    catalog, task = planar_task([[0.2, 0.2]])
    cfg = replace(default_config("mbq"), n_parents_mate=50)
    rng = np.random.default_rng(82)
    pop = init_population(cfg, task, catalog, rng)[:2]
    costs = [LexCost(((0.0,), (0.0,))), LexCost(((1.0,), (0.0,)))]
    cfg2 = replace(cfg, p_select=2.0)
    parents = select_parents(pop, costs, cfg2, rng)
    assert all(p.modules == pop[0].modules for p in parents)


def test_select_parents_linear_rank_frequencies():
    catalog, task = planar_task([[0.2, 0.2]])
    n = 35
    cfg = replace(default_config("mbq"), n_pop=n, n_parents_mate=1,
                  p_select=1.17)
    rng = np.random.default_rng(83)
    pop = init_population(cfg, task, catalog, rng)
    costs = [LexCost(((float(i),),)) for i in range(n)]
    draws = 100_000
    counts = np.zeros(n)
    weights = rank_weights(n, 1.17)
    picks = rng.choice(n, size=draws, p=weights / weights.sum())
    for p in picks:
        counts[p] += 1
    expected = draws * weights[0] / weights.sum()
    sigma = math.sqrt(draws * (weights[0] / weights.sum()) * (1 - weights[0] / weights.sum()))
    assert abs(counts[0] - expected) <= 3 * sigma


def test_lamarckian_disabled():
    catalog, task = planar_task([[0.3, -0.4]])
    cfg = replace(default_config("mbq"), p_lamarck=0.0)
    rng = np.random.default_rng(84)
    genome = init_population(cfg, task, catalog, rng)[0]
    candidate = decode(genome, task, catalog, cfg)
    evaluation = evaluate(candidate, task, catalog, cfg, rng=rng)
    out = lamarckian_writeback(genome, evaluation, task, catalog, cfg, rng)
    np.testing.assert_array_equal(out.ik_genes, genome.ik_genes)


def test_lamarckian_fixpoint_round_trip():
    catalog, task = planar_task([[0.3, -0.4]])
    cfg = replace(default_config("mbq"), n_genes=6, p_lamarck=1.0)
    rng = np.random.default_rng(85)
    genome = init_population(cfg, task, catalog, rng)[0]
    genome.modules = ["base_t", "joint_t", "link_t", "joint_t", "link_t", "eef_t"]
    genome.base_genes[:] = 0.5   # center of the region = the probe's base
    # seed the genes with the exact solution: writeback must round-trip
    spec = catalog["joint_t"].joint
    q_sol = np.array([0.3, -0.4])
    from modco.ik import encode_ik_gene
    genome.ik_genes[1, 0] = encode_ik_gene(q_sol[0], spec)
    genome.ik_genes[3, 0] = encode_ik_gene(q_sol[1], spec)
    candidate = decode(genome, task, catalog, cfg)
    evaluation = evaluate(candidate, task, catalog, cfg, rng=rng)
    assert evaluation.cost.levels[3][0] == -1.0
    out = lamarckian_writeback(genome, evaluation, task, catalog, cfg, rng)
    assert abs(out.ik_genes[1, 0] - genome.ik_genes[1, 0]) < 1e-12
    assert abs(out.ik_genes[3, 0] - genome.ik_genes[3, 0]) < 1e-12


def test_run_budget_edge_returns_initial_best():
    catalog, task = planar_task([[0.3, -0.4]])
    cfg = replace(default_config("m"), n_pop=4, n_ik=20, n_ik_obs=30,
                  t_plan=0.2)
    result = run(task, catalog, cfg, budget_seconds=1e-6, seed=5)
    assert result.generations == 0
    assert result.best_cost is not None
    assert len(result.records) >= 1


def test_run_deterministic_log(tmp_path):
    catalog, task = planar_task([[0.3, -0.4], [0.7, 0.3]])
    cfg = replace(default_config("m"), n_pop=5, n_ik=25, n_ik_obs=30,
                  t_plan=0.2)
    logs = []
    for rep in range(2):
        path = tmp_path / f"log{rep}.jsonl"
        run(task, catalog, cfg, budget_seconds=3.0, seed=11, workers=1,
            log_path=path)
        logs.append(path.read_bytes())
    assert logs[0] == logs[1]


def test_run_worker_count_invariance(tmp_path):
    catalog, task = planar_task([[0.3, -0.4]])
    cfg = replace(default_config("m"), n_pop=4, n_ik=20, n_ik_obs=25,
                  t_plan=0.2)
    paths = []
    for workers in (1, 2):
        path = tmp_path / f"log_w{workers}.jsonl"
        run(task, catalog, cfg, budget_seconds=2.0, seed=12, workers=workers,
            log_path=path)
        paths.append(path.read_bytes())
    assert paths[0] == paths[1]


def test_run_elitism_monotone_best():
    catalog, task = planar_task([[0.3, -0.4], [0.6, 0.5]])
    cfg = replace(default_config("mbq"), n_pop=8, n_genes=8, n_lamarck=40,
                  t_plan=0.2)
    result = run(task, catalog, cfg, budget_seconds=8.0, seed=13)
    best_so_far = None
    for record in result.records:
        if best_so_far is None or record.cost < best_so_far:
            best_so_far = record.cost
    assert best_so_far == result.best_cost
    # per-generation best is non-increasing thanks to elitism
    per_gen = {}
    for record in result.records:
        cur = per_gen.get(record.gen)
        if cur is None or record.cost < cur:
            per_gen[record.gen] = record.cost
    gens = sorted(per_gen)
    running = per_gen[gens[0]]
    for g in gens[1:]:
        running = min(running, per_gen[g])
        assert not per_gen[g].compare(running) < 0 or per_gen[g] == running


def test_run_scope_m_logs_contain_no_extra_genes(tmp_path):
    catalog, task = planar_task([[0.3, -0.4]])
    cfg = replace(default_config("m"), n_pop=3, n_ik=15, n_ik_obs=20, t_plan=0.1)
    path = tmp_path / "log.jsonl"
    run(task, catalog, cfg, budget_seconds=0.5, seed=14, log_path=path)
    import json as _json
    for line in path.read_text().splitlines():
        record = _json.loads(line)
        assert record["genome"]["base"] is None
        assert record["genome"]["ik"] is None
