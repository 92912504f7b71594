"""Genetic algorithm over base, module and IK-seed genes.

The genome couples a normalized base-pose block, one module gene per slot
and one unit-interval IK gene per slot and goal. IK genes ride along with
their slot through single-point crossover and stay hidden while the slot
holds a joint-less module, so recombination can re-express inherited joint
angles (and hide them again).

Budgets are charged through the deterministic operation meter; with a fixed
seed the whole run, including its JSONL log, reproduces byte for byte
regardless of the worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .catalog import Assembly, ModuleCatalog, ModuleKind
from .config import ScopeConfig
from .ik import decode_ik_gene, encode_ik_gene, solve_ik
from .lexicost import Candidate, Evaluation, LexCost, evaluate
from .meter import Counters
from .planner import RoadmapStore, roadmap_key
from .task import Task

EMPTY = "EMPTY"


@dataclass
class Genome:
    """Base block plus per-slot module and IK genes (always n_genes slots)."""

    modules: List[str]
    base_genes: Optional[np.ndarray] = None      # (n_base,) in [0, 1]
    ik_genes: Optional[np.ndarray] = None        # (n_genes, n_goals) in [0, 1]

    def copy(self) -> "Genome":
        return Genome(list(self.modules),
                      None if self.base_genes is None else self.base_genes.copy(),
                      None if self.ik_genes is None else self.ik_genes.copy())

    def to_json(self) -> dict:
        return {"modules": list(self.modules),
                "base": None if self.base_genes is None else [float(v) for v in self.base_genes],
                "ik": None if self.ik_genes is None else [[float(v) for v in row]
                                                          for row in self.ik_genes]}

    @staticmethod
    def from_json(obj: dict) -> "Genome":
        return Genome(list(obj["modules"]),
                      None if obj.get("base") is None else np.asarray(obj["base"], dtype=float),
                      None if obj.get("ik") is None else np.asarray(obj["ik"], dtype=float))


def _module_pools(catalog: ModuleCatalog):
    return {
        "base": catalog.ids_of_kind(ModuleKind.BASE),
        "eef": catalog.ids_of_kind(ModuleKind.EEF),
        "joint": catalog.ids_of_kind(ModuleKind.JOINT),
        "link": catalog.ids_of_kind(ModuleKind.LINK),
        "interior": catalog.ids_of_kind(ModuleKind.JOINT, ModuleKind.LINK),
    }


def decode(genome: Genome, task: Task, catalog: ModuleCatalog,
           config: ScopeConfig) -> Candidate:
    """Erase empty slots, place the base and scale expressed IK genes."""
    module_ids = [m for m in genome.modules if m != EMPTY]
    assembly = Assembly(module_ids)
    if config.has_base_genes:
        base = task.base_region.decode(genome.base_genes)
    else:
        base = task.base_region.center()
    ik_seeds = None
    if config.has_ik_genes:
        joint_slots = [(slot, catalog[m].joint) for slot, m in enumerate(genome.modules)
                       if m != EMPTY and m in catalog
                       and catalog[m].kind is ModuleKind.JOINT]
        n_goals = genome.ik_genes.shape[1]
        ik_seeds = np.zeros((n_goals, len(joint_slots)))
        for j, (slot, spec) in enumerate(joint_slots):
            for g in range(n_goals):
                ik_seeds[g, j] = decode_ik_gene(genome.ik_genes[slot, g], spec)
    return Candidate(assembly=assembly, base=base, ik_seeds=ik_seeds)


def init_population(config: ScopeConfig, task: Task, catalog: ModuleCatalog,
                    rng: np.random.Generator) -> List[Genome]:
    """Random genomes averaging n_dof_init joint modules each.

    Initial chains are drawn within one flange size, so generation zero
    decodes to valid robots; the genetic operators may break and re-discover
    compatibility later.
    """
    pools = _module_pools(catalog)
    sizes = sorted({catalog[m].size_class.value for m in pools["base"]})
    n_interior = config.n_genes - 2
    p_joint = min(config.n_dof_init / max(n_interior, 1), 1.0)
    population = []
    for _ in range(config.n_pop):
        size = str(rng.choice(sizes))
        bases = [m for m in pools["base"] if catalog[m].size_class.value == size]
        eefs = [m for m in pools["eef"] if catalog[m].size_class.value == size]
        joints = [m for m in pools["joint"] if catalog[m].size_class.value == size]
        links = [m for m in pools["link"] if catalog[m].size_class.value == size]
        non_joint = links + [EMPTY]
        modules = [str(rng.choice(bases))]
        for _ in range(n_interior):
            if rng.random() < p_joint:
                modules.append(str(rng.choice(joints)))
            else:
                modules.append(str(rng.choice(non_joint)))
        modules.append(str(rng.choice(eefs)))
        base_genes = rng.random(task.base_region.n_params) if config.has_base_genes else None
        ik_genes = rng.random((config.n_genes, len(task.goals))) if config.has_ik_genes else None
        population.append(Genome(modules, base_genes, ik_genes))
    return population


def mutate(genome: Genome, config: ScopeConfig, catalog: ModuleCatalog,
           rng: np.random.Generator) -> Genome:
    """Point-wise replacement with a different module plus Gaussian drift on
    the scalar genes."""
    pools = _module_pools(catalog)
    out = genome.copy()
    last = len(out.modules) - 1

    def redraw(pool, current):
        options = [m for m in pool if m != current]
        return str(rng.choice(options)) if options else current

    for slot in range(len(out.modules)):
        if rng.random() >= config.p_mutate:
            continue
        current = out.modules[slot]
        if slot == 0:
            out.modules[slot] = redraw(pools["base"], current)
        elif slot == last:
            out.modules[slot] = redraw(pools["eef"], current)
        elif rng.random() < config.p_empty:
            out.modules[slot] = EMPTY if current != EMPTY \
                else redraw(pools["interior"], current)
        else:
            out.modules[slot] = redraw(pools["interior"], current)
    if out.base_genes is not None and config.sigma_base:
        noise = rng.normal(0.0, config.sigma_base, size=out.base_genes.shape)
        out.base_genes = np.clip(out.base_genes + noise, 0.0, 1.0)
    if out.ik_genes is not None and config.sigma_ik:
        noise = rng.normal(0.0, config.sigma_ik, size=out.ik_genes.shape)
        out.ik_genes = np.clip(out.ik_genes + noise, 0.0, 1.0)
    return out


def crossover(a: Genome, b: Genome, rng: np.random.Generator) -> Tuple[Genome, Genome]:
    """Single-point crossover; the base block acts as slot zero and IK genes
    travel with their module slot."""
    if len(a.modules) != len(b.modules):
        raise ValueError("genomes must share the slot count")
    n_units = len(a.modules) + (1 if a.base_genes is not None else 0)
    cut = int(rng.integers(0, n_units + 1))
    child1, child2 = b.copy(), a.copy()   # cut at 0 swaps everything
    has_base = a.base_genes is not None
    if has_base and cut >= 1:
        child1.base_genes = a.base_genes.copy()
        child2.base_genes = b.base_genes.copy()
    slot_cut = cut - 1 if has_base else cut
    for slot in range(max(slot_cut, 0)):
        child1.modules[slot] = a.modules[slot]
        child2.modules[slot] = b.modules[slot]
        if a.ik_genes is not None:
            child1.ik_genes[slot] = a.ik_genes[slot]
            child2.ik_genes[slot] = b.ik_genes[slot]
    return child1, child2


def rank_weights(n: int, pressure: float) -> np.ndarray:
    """Linear-ranking selection weights, best first."""
    if n == 1:
        return np.ones(1)
    ranks = np.arange(n)
    return (pressure - (2.0 * pressure - 2.0) * ranks / (n - 1)) / n


def select_parents(population: Sequence[Genome], costs: Sequence[LexCost],
                   config: ScopeConfig, rng: np.random.Generator) -> List[Genome]:
    """Rank-based sampling with replacement under selection pressure."""
    order = sorted(range(len(population)), key=lambda i: costs[i])
    weights = rank_weights(len(population), config.p_select)
    weights = weights / weights.sum()
    picks = rng.choice(len(order), size=config.n_parents_mate, replace=True,
                       p=weights)
    return [population[order[int(p)]] for p in picks]


def lamarckian_writeback(genome: Genome, evaluation: Evaluation, task: Task,
                         catalog: ModuleCatalog, config: ScopeConfig,
                         rng: np.random.Generator,
                         counters: Optional[Counters] = None) -> Genome:
    """Per goal, with probability p_lamarck, polish the decoded IK seed with
    the solver and overwrite the expressed genes on success."""
    if not config.has_ik_genes or evaluation.robot is None:
        return genome
    if evaluation.cost.depth < 4:      # evaluation never reached the IK level
        return genome
    robot = evaluation.robot
    joint_slots = [slot for slot, m in enumerate(genome.modules)
                   if m != EMPTY and catalog[m].kind is ModuleKind.JOINT]
    if not joint_slots:
        return genome
    specs = [catalog[genome.modules[slot]].joint for slot in joint_slots]
    out = genome.copy()
    for g_idx, goal in enumerate(task.goals):
        if rng.random() >= config.p_lamarck:
            continue
        seed = np.array([decode_ik_gene(out.ik_genes[slot, g_idx], spec)
                         for slot, spec in zip(joint_slots, specs)])
        # collision-aware polish: writing back colliding solutions would pull
        # the population into configurations the deeper levels must reject
        res = solve_ik(robot, goal, seed, budget=config.n_lamarck,
                       avoid_collisions=True, scene=task.scene, rng=rng,
                       counters=counters, rot_weight=config.rot_weight)
        if res.satisfied:
            for j, (slot, spec) in enumerate(zip(joint_slots, specs)):
                out.ik_genes[slot, g_idx] = encode_ik_gene(res.q[j], spec)
    return out


# ----------------------------------------------------------------------
# the budgeted generational loop

@dataclass
class LogRecord:
    gen: int
    idx: int
    t: float
    genome: Genome
    cost: LexCost
    counters: dict

    def to_json_line(self) -> str:
        cycle = self.cost.cycle_time
        payload = {
            "gen": self.gen, "idx": self.idx, "t": self.t,
            "depth": self.cost.depth, "levels": self.cost.to_json(),
            "solved": self.cost.solved,
            "cycle_time": cycle,
            "genome": self.genome.to_json(),
            "counters": self.counters,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


@dataclass
class RunResult:
    best_genome: Optional[Genome]
    best_cost: Optional[LexCost]
    best_evaluation: Optional[Evaluation]
    records: List[LogRecord]
    generations: int
    meter_seconds: float

    @property
    def solved(self) -> bool:
        return self.best_cost is not None and self.best_cost.solved


def _candidate_seed(master: int, gen: int, idx: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master,
                                                        spawn_key=(purpose, gen, idx)))


def _process_individual(args):
    """Evaluate one genome (and polish it); runs on coordinator or worker."""
    (genome, task, catalog, config, master_seed, gen, idx, roadmap) = args
    store = RoadmapStore()
    if roadmap is not None:
        store.release(roadmap)
    rng_eval = _candidate_seed(master_seed, gen, idx, 2)
    candidate = decode(genome, task, catalog, config)
    evaluation = evaluate(candidate, task, catalog, config, roadmaps=store,
                          rng=rng_eval)
    rng_lam = _candidate_seed(master_seed, gen, idx, 3)
    polished = lamarckian_writeback(genome, evaluation, task, catalog, config,
                                    rng_lam, counters=evaluation.counters)
    key = roadmap_key(candidate.assembly.module_ids, candidate.base, task.scene)
    return evaluation, polished, store.peek(key)


def run(task: Task, catalog: ModuleCatalog, config: ScopeConfig,
        budget_seconds: float, seed: int = 0, workers: int = 1,
        log_path: Optional[Union[str, Path]] = None) -> RunResult:
    """Budgeted generational GA; returns the best-so-far candidate.

    The budget is metered deterministically (see `meter`), so a fixed seed
    reproduces the identical run and log regardless of `workers`.
    """
    rng_init = _candidate_seed(seed, 0, 0, 0)
    population = init_population(config, task, catalog, rng_init)
    roadmaps = RoadmapStore()
    totals = Counters()
    records: List[LogRecord] = []
    best: Tuple[Optional[LexCost], Optional[Genome], Optional[Evaluation]] = (None, None, None)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    gen = 0
    out_of_budget = False

    try:
        while not out_of_budget:
            # evaluations within a generation see the cache state as of the
            # generation start; merges happen afterwards in index order
            jobs = []
            for idx, genome in enumerate(population):
                candidate = decode(genome, task, catalog, config)
                key = roadmap_key(candidate.assembly.module_ids, candidate.base,
                                  task.scene)
                jobs.append((genome, task, catalog, config, seed, gen, idx,
                             roadmaps.peek(key)))
            if pool is not None:
                results = list(pool.map(_process_individual, jobs))
            else:
                results = [_process_individual(j) for j in jobs]

            evaluated: List[Tuple[Genome, Evaluation]] = []
            for idx, (evaluation, polished, updated) in enumerate(results):
                totals.add(evaluation.counters)
                meter = config.cost_model.seconds(totals)
                records.append(LogRecord(gen=gen, idx=idx, t=meter,
                                         genome=population[idx].copy(),
                                         cost=evaluation.cost,
                                         counters=evaluation.counters.snapshot()))
                if updated is not None:
                    roadmaps.release(updated)
                evaluated.append((polished, evaluation))
                if best[0] is None or evaluation.cost < best[0]:
                    best = (evaluation.cost, population[idx].copy(), evaluation)
                if meter >= budget_seconds:
                    out_of_budget = True
                    break
            if out_of_budget:
                break

            population = [g for g, _ in evaluated]
            costs = [e.cost for _, e in evaluated]
            rng_ops = _candidate_seed(seed, gen, 0, 1)
            order = sorted(range(len(population)), key=lambda i: costs[i])
            elites = [population[i].copy() for i in order[:config.n_elites]]
            parents = select_parents(population, costs, config, rng_ops)
            keep = max(config.n_parents_keep, 0)
            survivors = [p.copy() for p in parents[:keep]]
            n_children = max(config.n_pop - len(elites) - len(survivors), 0)
            children: List[Genome] = []
            pair = 0
            while len(children) < n_children:
                a = parents[pair % len(parents)]
                b = parents[(pair + 1) % len(parents)]
                pair += 1
                c1, c2 = crossover(a, b, rng_ops)
                children.append(mutate(c1, config, catalog, rng_ops))
                if len(children) < n_children:
                    children.append(mutate(c2, config, catalog, rng_ops))
            population = elites + survivors + children
            gen += 1
    finally:
        if pool is not None:
            pool.shutdown()

    if log_path is not None:
        with open(log_path, "w") as f:
            for record in records:
                f.write(record.to_json_line() + "\n")
    return RunResult(best_genome=best[1], best_cost=best[0],
                     best_evaluation=best[2], records=records,
                     generations=gen,
                     meter_seconds=config.cost_model.seconds(totals))
