"""Sampling-based roadmap planner with lazy edge validation.

Joint-space roadmaps are cached per (assembly, quantized base, scene) key and
keep improving across queries of the same robot. Edge weights are
velocity-scaled Chebyshev times, so shortest paths align with the
trajectory-time lower bound used by the cost hierarchy.

Budgets are charged through the deterministic operation meter rather than
wall-clock time; see `meter`.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .collision import CollisionScene, clear_mask, segment_clear
from .meter import CostModel, Counters, DEFAULT_COST_MODEL
from .robot import RobotInstance
from .spatial import Pose

UNKNOWN, VALID, INVALID = 0, 1, 2


@dataclass
class JointPath:
    """Piecewise-linear joint path; endpoints equal the supplied IK solutions."""

    waypoints: np.ndarray

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        deltas = np.abs(np.diff(self.waypoints, axis=0))
        if len(deltas) and (deltas.max(axis=1) == 0.0).any():
            raise ValueError("consecutive waypoints must be distinct")

    @property
    def n_segments(self) -> int:
        return max(len(self.waypoints) - 1, 0)

    def to_json(self) -> list:
        return [[float(v) for v in w] for w in self.waypoints]


def path_time_lower_bound(path: Union[JointPath, np.ndarray], v_max: np.ndarray) -> float:
    """Per-segment Chebyshev time at constant maximum joint velocity."""
    waypoints = path.waypoints if isinstance(path, JointPath) else np.atleast_2d(path)
    if len(waypoints) < 2:
        return 0.0
    deltas = np.abs(np.diff(waypoints, axis=0))
    return float((deltas / np.asarray(v_max, dtype=float)).max(axis=1).sum())


def trivial_path(q: np.ndarray) -> "JointPath":
    """Degenerate single-configuration path (start equals goal)."""
    p = JointPath.__new__(JointPath)
    p.waypoints = np.atleast_2d(np.asarray(q, dtype=float))
    return p


class Roadmap:
    """Mutable sampling graph for one assembly.

    Nodes are joint configurations, valid across base placements; edge
    validity flags only hold for one (base, scene) context and are reset
    lazily when the roadmap is leased under a different context.
    """

    def __init__(self, key: str, n_dof: int, context: str = ""):
        self.key = key
        self.n_dof = n_dof
        self.context = context
        self.nodes: List[np.ndarray] = []
        self.edges: Dict[Tuple[int, int], int] = {}     # (i<j) -> validity
        self.adjacency: Dict[int, List[int]] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def add_node(self, q: np.ndarray) -> int:
        idx = len(self.nodes)
        self.nodes.append(np.asarray(q, dtype=float).copy())
        self.adjacency[idx] = []
        return idx

    def add_edge(self, i: int, j: int) -> None:
        key = (i, j) if i < j else (j, i)
        if i == j or key in self.edges:
            return
        self.edges[key] = UNKNOWN
        self.adjacency[i].append(j)
        self.adjacency[j].append(i)

    def validity(self, i: int, j: int) -> int:
        return self.edges.get((i, j) if i < j else (j, i), INVALID)

    def set_validity(self, i: int, j: int, value: int) -> None:
        self.edges[(i, j) if i < j else (j, i)] = value

    def reset_validity(self, context: str) -> None:
        self.context = context
        for key in self.edges:
            self.edges[key] = UNKNOWN

    def copy(self) -> "Roadmap":
        other = Roadmap(self.key, self.n_dof, self.context)
        other.nodes = [n.copy() for n in self.nodes]
        other.edges = dict(self.edges)
        other.adjacency = {k: list(v) for k, v in self.adjacency.items()}
        return other


def assembly_key(assembly_ids: Sequence[str]) -> str:
    return hashlib.sha1(json.dumps(list(assembly_ids)).encode()).hexdigest()


def context_key(base: Pose, scene: CollisionScene) -> str:
    """Validity context: base quantized to 1 mm / ~0.1 deg plus scene hash."""
    base_q = [round(float(v), 3) for v in base.quaternion()]
    base_t = [round(float(v), 3) for v in base.t]
    payload = json.dumps({"q": base_q, "t": base_t, "scene": scene.to_json()},
                         sort_keys=True)
    return hashlib.sha1(payload.encode()).hexdigest()


def roadmap_key(assembly_ids: Sequence[str], base: Pose, scene: CollisionScene) -> str:
    """Combined key (assembly + quantized base + scene) for exact reuse."""
    return assembly_key(assembly_ids) + ":" + context_key(base, scene)


class RoadmapStore:
    """Per-run roadmap cache with optional pickle persistence.

    Keyed by assembly; a lease under a different (base, scene) context keeps
    the sampled nodes but resets all edge validity flags.
    """

    def __init__(self):
        self._maps: Dict[str, Roadmap] = {}

    @staticmethod
    def _split(key: str) -> Tuple[str, str]:
        if ":" in key:
            a, c = key.split(":", 1)
            return a, c
        return key, ""

    def lease(self, key: str, n_dof: int) -> Roadmap:
        """Hand out a private copy; merge it back with `release`."""
        a_key, ctx = self._split(key)
        stored = self._maps.get(a_key)
        if stored is None:
            return Roadmap(a_key, n_dof, ctx)
        out = stored.copy()
        if out.context != ctx:
            out.reset_validity(ctx)
        return out

    def peek(self, key: str) -> Optional[Roadmap]:
        """Copy under the requested context, or None when unknown."""
        a_key, ctx = self._split(key)
        if a_key not in self._maps:
            return None
        out = self._maps[a_key].copy()
        if out.context != ctx:
            out.reset_validity(ctx)
        return out

    def release(self, roadmap: Roadmap) -> None:
        current = self._maps.get(roadmap.key)
        if current is None or len(roadmap) >= len(current):
            self._maps[roadmap.key] = roadmap

    def __len__(self) -> int:
        return len(self._maps)

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "wb") as f:
            pickle.dump(self._maps, f)

    @staticmethod
    def load(path: Union[str, Path]) -> "RoadmapStore":
        store = RoadmapStore()
        with open(path, "rb") as f:
            store._maps = pickle.load(f)
        return store


def _edge_weight(a: np.ndarray, b: np.ndarray, v_max: np.ndarray) -> float:
    return float((np.abs(b - a) / v_max).max())


def _search(roadmap: Roadmap, weights: Dict[Tuple[int, int], float],
            start: int, goal: int, v_max: np.ndarray,
            counters: Optional[Counters],
            valid_only: bool = False) -> Optional[List[int]]:
    """A* over the graph; Chebyshev time to goal as heuristic.

    With valid_only, unknown edges are skipped too, so any result is a
    certified collision-free path.
    """
    goal_q = roadmap.nodes[goal]
    open_heap = [(0.0, 0.0, start)]
    g_cost = {start: 0.0}
    parent = {start: -1}
    closed = set()
    while open_heap:
        _, g, node = heapq.heappop(open_heap)
        if node in closed:
            continue
        closed.add(node)
        if node == goal:
            path = []
            while node != -1:
                path.append(node)
                node = parent[node]
            return path[::-1]
        for nb in roadmap.adjacency[node]:
            validity = roadmap.validity(node, nb)
            if validity == INVALID or (valid_only and validity != VALID):
                continue
            if nb in closed:
                continue
            if counters is not None:
                counters.plan_iters += 1
            key = (node, nb) if node < nb else (nb, node)
            w = weights.get(key)
            if w is None:
                w = _edge_weight(roadmap.nodes[node], roadmap.nodes[nb], v_max)
                weights[key] = w
            cand = g + w
            if cand < g_cost.get(nb, math.inf):
                g_cost[nb] = cand
                parent[nb] = node
                h = _edge_weight(roadmap.nodes[nb], goal_q, v_max)
                heapq.heappush(open_heap, (cand + h, cand, nb))
    return None


def _connection_radius(roadmap: Roadmap, robot: RobotInstance) -> Tuple[float, int]:
    n = max(len(roadmap), 2)
    d = max(robot.n_dof, 1)
    diameter = float(((robot.q_max - robot.q_min) / robot.v_max).max())
    gamma = 2.0 * diameter
    radius = gamma * (math.log(n) / n) ** (1.0 / d)
    return radius, 10


def plan(robot: RobotInstance, q_start: np.ndarray, q_goal: np.ndarray,
         scene: CollisionScene, time_limit: float, roadmap: Roadmap,
         rng: np.random.Generator, counters: Optional[Counters] = None,
         resolution: float = 0.05,
         cost_model: CostModel = DEFAULT_COST_MODEL) -> Optional[JointPath]:
    """Anytime lazy-PRM* query; returns the best path found within budget.

    The roadmap is mutated in place (new samples, validated edges) so later
    queries on the same key keep improving.
    """
    counters = counters if counters is not None else Counters()
    q_start = np.asarray(q_start, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    v_max = robot.v_max
    if np.max(np.abs(q_start - q_goal)) == 0.0:
        return trivial_path(q_start)
    if not clear_mask(robot, np.vstack([q_start, q_goal]), scene,
                      counters=counters).all():
        return None

    charged0 = cost_model.seconds(counters)

    def budget_left() -> bool:
        return cost_model.seconds(counters) - charged0 < time_limit

    weights: Dict[Tuple[int, int], float] = {}

    def locate(q: np.ndarray) -> int:
        for idx, node in enumerate(roadmap.nodes):
            if np.array_equal(node, q):
                return idx
        return roadmap.add_node(q)

    start = locate(q_start)
    goal = locate(q_goal)

    def connect(idx: int) -> None:
        counters.plan_iters += 1
        q = roadmap.nodes[idx]
        if len(roadmap) < 2:
            return
        stack = np.vstack(roadmap.nodes)
        dists = (np.abs(stack - q) / v_max).max(axis=1)
        dists[idx] = np.inf
        radius, k = _connection_radius(roadmap, robot)
        if len(roadmap) < 50:
            order = np.argsort(dists)[:k]
        else:
            order = np.nonzero(dists <= radius)[0]
            if len(order) == 0:
                order = np.argsort(dists)[:1]
        for o in order:
            roadmap.add_edge(idx, int(o))

    connect(start)
    connect(goal)

    best: Optional[List[int]] = None
    best_cost = math.inf

    # direct edge first: convex scenes are trivial, and a valid straight
    # line must win ties against any detour of equal Chebyshev time
    roadmap.add_edge(start, goal)
    if roadmap.validity(start, goal) == UNKNOWN:
        ok = segment_clear(robot, q_start, q_goal, scene, resolution,
                           counters=counters)
        roadmap.set_validity(start, goal, VALID if ok else INVALID)
    if roadmap.validity(start, goal) == VALID:
        best = [start, goal]
        best_cost = _edge_weight(q_start, q_goal, v_max)

    # wire up isolated nodes (freshly seeded goal configurations) and offer a
    # few mid-range postures: table-top detours often pass through them
    for idx in range(len(roadmap)):
        if not roadmap.adjacency[idx]:
            connect(idx)
    if best is None and len(roadmap) < 40:
        mid = (robot.q_min + robot.q_max) / 2.0
        vias = [mid] + [np.clip(mid + rng.normal(0.0, 0.35, robot.n_dof),
                                robot.q_min, robot.q_max) for _ in range(3)]
        counters.plan_iters += len(vias)
        keep = clear_mask(robot, np.vstack(vias), scene, counters=counters)
        for q, ok in zip(vias, keep):
            if ok:
                idx = roadmap.add_node(q)
                connect(idx)
                roadmap.add_edge(start, idx)
                roadmap.add_edge(idx, goal)

    def path_cost(indices: List[int]) -> float:
        return sum(_edge_weight(roadmap.nodes[a], roadmap.nodes[b], v_max)
                   for a, b in zip(indices, indices[1:]))

    def try_search() -> None:
        nonlocal best, best_cost
        while budget_left():
            indices = _search(roadmap, weights, start, goal, v_max, counters)
            if indices is None:
                return
            if best is not None and path_cost(indices) >= best_cost:
                return  # lazily validated optimum cannot improve on current best
            all_valid = True
            for a, b in zip(indices, indices[1:]):
                if roadmap.validity(a, b) != UNKNOWN:
                    continue
                ok = segment_clear(robot, roadmap.nodes[a], roadmap.nodes[b],
                                   scene, resolution, counters=counters)
                roadmap.set_validity(a, b, VALID if ok else INVALID)
                if not ok:
                    all_valid = False
                    break
            if all_valid:
                cost = path_cost(indices)
                if cost < best_cost:
                    best, best_cost = indices, cost
                return

    # a warm roadmap may already hold a certified path from earlier queries
    seeded = _search(roadmap, weights, start, goal, v_max, counters,
                     valid_only=True)
    if seeded is not None:
        best, best_cost = seeded, path_cost(seeded)

    try_search()
    while budget_left():
        samples = rng.uniform(robot.q_min, robot.q_max, size=(8, robot.n_dof))
        counters.plan_iters += len(samples)
        keep = clear_mask(robot, samples, scene, counters=counters)
        for q in samples[keep]:
            connect(roadmap.add_node(q))
        try_search()

    if best is None:
        return None
    waypoints = [roadmap.nodes[i] for i in best]
    dedup = [waypoints[0]]
    for w in waypoints[1:]:
        if np.max(np.abs(w - dedup[-1])) > 0.0:
            dedup.append(w)
    if len(dedup) == 1:
        return trivial_path(dedup[0])
    return JointPath(np.vstack(dedup))
