"""Optimization scope configuration and shipped hyperparameter defaults.

Four scopes exist: modules only ("m"), modules + base ("mb"), modules + IK
genes ("mq") and the full joint optimization ("mbq"). Baseline scopes carry
IK solver budgets instead of IK genes; scopes without base genes pin the
base to the task region's center.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

from .meter import CostModel, DEFAULT_COST_MODEL

SCOPES = ("m", "mb", "mq", "mbq")


@dataclass(frozen=True)
class ScopeConfig:
    scope: str
    # gene-specific
    n_ik: Optional[int] = None
    n_ik_obs: Optional[int] = None
    t_plan: float = 1.0
    sigma_base: Optional[float] = None
    sigma_ik: Optional[float] = None
    p_lamarck: Optional[float] = None
    n_lamarck: Optional[int] = None
    # genetic algorithm
    n_dof_init: int = 7
    p_empty: float = 0.5
    n_pop: int = 20
    n_genes: int = 12
    p_mutate: float = 0.1
    n_parents_mate: int = 8
    n_elites: int = 2
    n_parents_keep: int = 0
    p_select: float = 1.5
    # engine settings
    collision_resolution: float = 0.05
    path_deviation: float = 0.05
    trajectory_dt: float = 0.004
    rot_weight: float = 0.5
    cost_model: CostModel = field(default_factory=lambda: DEFAULT_COST_MODEL)

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.has_ik_genes:
            if self.sigma_ik is None or self.p_lamarck is None or self.n_lamarck is None:
                raise ValueError(f"scope {self.scope}: IK gene parameters missing")
            if self.n_ik is not None or self.n_ik_obs is not None:
                raise ValueError(f"scope {self.scope}: solver budgets not used with IK genes")
        else:
            if self.n_ik is None or self.n_ik_obs is None:
                raise ValueError(f"scope {self.scope}: IK solver budgets missing")
            if self.sigma_ik is not None or self.p_lamarck is not None or self.n_lamarck is not None:
                raise ValueError(f"scope {self.scope}: IK gene parameters not allowed")
        if self.has_base_genes:
            if self.sigma_base is None:
                raise ValueError(f"scope {self.scope}: sigma_base missing")
        elif self.sigma_base is not None:
            raise ValueError(f"scope {self.scope}: sigma_base not allowed")
        if not (1.0 <= self.p_select <= 2.0):
            raise ValueError("p_select must lie in [1, 2]")
        if self.n_genes < 3:
            raise ValueError("need at least base + one slot + eef")

    @property
    def has_base_genes(self) -> bool:
        return self.scope in ("mb", "mbq")

    @property
    def has_ik_genes(self) -> bool:
        return self.scope in ("mq", "mbq")

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_json() if isinstance(v, CostModel) else v
        return out

    @staticmethod
    def from_json(obj: dict) -> "ScopeConfig":
        obj = dict(obj)
        if "cost_model" in obj and isinstance(obj["cost_model"], dict):
            obj["cost_model"] = CostModel.from_json(obj["cost_model"])
        return ScopeConfig(**obj)


# Shipped per-scope defaults (tuned values for each optimization scope).
_DEFAULTS = {
    "m": dict(n_ik=135, n_ik_obs=534, t_plan=3.68,
              n_dof_init=7, p_empty=0.50, n_pop=13, n_genes=13, p_mutate=0.03,
              n_parents_mate=6, n_elites=1, n_parents_keep=3, p_select=1.64),
    "mb": dict(n_ik=189, n_ik_obs=303, t_plan=13.12, sigma_base=0.19,
               n_dof_init=7, p_empty=0.28, n_pop=17, n_genes=15, p_mutate=0.06,
               n_parents_mate=12, n_elites=3, n_parents_keep=11, p_select=1.74),
    "mq": dict(t_plan=2.07, sigma_ik=0.13, p_lamarck=0.80, n_lamarck=148,
               n_dof_init=7, p_empty=0.58, n_pop=22, n_genes=15, p_mutate=0.12,
               n_parents_mate=11, n_elites=5, n_parents_keep=11, p_select=1.81),
    "mbq": dict(t_plan=0.63, sigma_base=0.88, sigma_ik=0.05, p_lamarck=1.00,
                n_lamarck=105, n_dof_init=8, p_empty=0.41, n_pop=35,
                n_genes=18, p_mutate=0.08, n_parents_mate=9, n_elites=2,
                n_parents_keep=8, p_select=1.17),
}


def default_config(scope: str) -> ScopeConfig:
    if scope not in _DEFAULTS:
        raise ValueError(f"unknown scope {scope!r}")
    return ScopeConfig(scope=scope, **_DEFAULTS[scope])


def load_config(scope: str, path: Optional[Union[str, Path]] = None) -> ScopeConfig:
    """Scope defaults, optionally overridden by a JSON config file."""
    cfg = default_config(scope)
    if path is None:
        return cfg
    overrides = json.loads(Path(path).read_text())
    overrides.pop("scope", None)
    if "cost_model" in overrides and isinstance(overrides["cost_model"], dict):
        overrides["cost_model"] = CostModel.from_json(overrides["cost_model"])
    return replace(cfg, **overrides)
