"""Synthetic birth-cohort life histories generated from the structural model.

Each agent draws war shocks at the configured prevalence, re-optimises its
retirement age with schooling fixed at the baseline optimum, and the model
time line is mapped affinely to calendar ages. Randomness for agent ``i``
comes from ``SeedSequence([seed, i])`` so results do not depend on the
number of agents or on how the work is split across processes.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.stats import truncnorm

from . import lifecycle as lc
from .exceptions import AgentSolveError, BenPorathError, EmptyPanel
from .lifehist import PANEL_COLUMNS, STATES, derive_exit_indicator

logger = logging.getLogger(__name__)

# Exposure shares among men born 1919-21 (injury, captivity > 6 months, displacement).
DEFAULT_PREVALENCE = {"injury": 0.299, "captivity_gt6m": 0.474, "displacement": 0.227}
CAPTIVITY_MONTHS = 16.5


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must be a probability in [0, 1], got {p}")


@dataclass(frozen=True)
class Prevalence:
    injury: float = DEFAULT_PREVALENCE["injury"]
    captivity_gt6m: float = DEFAULT_PREVALENCE["captivity_gt6m"]
    displacement: float = DEFAULT_PREVALENCE["displacement"]

    def __post_init__(self):
        for name in ("injury", "captivity_gt6m", "displacement"):
            _check_prob(f"prevalence.{name}", getattr(self, name))


@dataclass(frozen=True)
class AgeMap:
    model_zero_age: float = 14.0
    model_one_age: float = 78.0

    def __post_init__(self):
        if not self.model_zero_age < self.model_one_age:
            raise ValueError("age_map.model_zero_age must be below model_one_age")

    @property
    def years_per_unit(self) -> float:
        return self.model_one_age - self.model_zero_age

    def to_age(self, t):
        return self.model_zero_age + t * self.years_per_unit

    def to_model(self, age):
        return (age - self.model_zero_age) / self.years_per_unit


@dataclass(frozen=True)
class Noise:
    exit_jitter_sd: float = 0.0
    employment_gap_prob: float = 0.0

    def __post_init__(self):
        if self.exit_jitter_sd < 0:
            raise ValueError("noise.exit_jitter_sd must be >= 0")
        _check_prob("noise.employment_gap_prob", self.employment_gap_prob)


@dataclass(frozen=True)
class ShockMagnitudes:
    injury_kappa: float = 1.2
    captivity_months: float = CAPTIVITY_MONTHS
    displacement_lam: float = 0.9
    displacement_delta: float = 0.0
    displacement_theta_scale: float = 1.0
    displacement_year: int = 1945


@dataclass(frozen=True)
class CohortConfig:
    birth_years: tuple = (1919, 1921)
    n_agents: int = 1000
    seed: int = 0
    prevalence: Prevalence = field(default_factory=Prevalence)
    age_map: AgeMap = field(default_factory=AgeMap)
    noise: Noise = field(default_factory=Noise)
    magnitudes: ShockMagnitudes = field(default_factory=ShockMagnitudes)
    female_share: float = 0.0
    female_prevalence: Prevalence = field(
        default_factory=lambda: Prevalence(injury=0.0, captivity_gt6m=0.0, displacement=0.227))
    female_participation: float = 1.0

    def __post_init__(self):
        lo, hi = self.birth_years
        if lo > hi:
            raise ValueError("birth_years must be an increasing (first, last) pair")
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        _check_prob("female_share", self.female_share)
        _check_prob("female_participation", self.female_participation)

    @property
    def years(self) -> list[int]:
        return list(range(self.birth_years[0], self.birth_years[1] + 1))

    @property
    def ages(self) -> np.ndarray:
        a0 = math.ceil(self.age_map.model_zero_age)
        a1 = math.floor(self.age_map.model_one_age)
        return np.arange(a0, a1 + 1)


@dataclass(frozen=True)
class AgentRecord:
    id: int
    birth_year: int
    female: bool
    shocks: tuple
    plan: lc.LifeCyclePlan
    states: tuple  # ((age, state), ...)

    @property
    def injured(self) -> bool:
        return any(isinstance(s, lc.Injury) for s in self.shocks)

    @property
    def pow(self) -> bool:
        return any(isinstance(s, lc.Captivity) for s in self.shocks)

    @property
    def displaced(self) -> bool:
        return any(isinstance(s, lc.Displacement) for s in self.shocks)


def _agent_rng(seed: int, agent_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, agent_id]))


class _Solver:
    """Per-call plan cache keyed by the shock combination."""

    def __init__(self, config: CohortConfig, prefs: lc.Preferences, tech: lc.Technology):
        self.config, self.prefs, self.tech = config, prefs, tech
        self.baseline = lc.solve_ex_ante(prefs, tech)
        self._plans: dict = {}

    def plan(self, shocks: tuple) -> lc.LifeCyclePlan:
        if shocks not in self._plans:
            self._plans[shocks] = lc.solve_ex_post(self.prefs, self.tech, shocks, self.baseline.s)
        return self._plans[shocks]


def _draw_agent(solver: _Solver, agent_id: int) -> AgentRecord:
    cfg = solver.config
    amap, mag = cfg.age_map, cfg.magnitudes
    rng = _agent_rng(cfg.seed, agent_id)
    years = cfg.years
    birth_year = years[agent_id % len(years)]

    # fixed draw order keeps every agent's stream layout identical
    u = rng.random(5)
    female = bool(u[0] < cfg.female_share)
    prev = cfg.female_prevalence if female else cfg.prevalence
    injured = bool(u[1] < prev.injury)
    pow_ = bool(u[2] < prev.captivity_gt6m)
    displaced = bool(u[3] < prev.displacement)
    participates = (not female) or bool(u[4] < cfg.female_participation)
    z = float(truncnorm.rvs(-4.0, 4.0, random_state=rng))
    gaps = rng.random(len(cfg.ages)) < cfg.noise.employment_gap_prob

    shocks = []
    if injured:
        shocks.append(lc.Injury(kappa=mag.injury_kappa))
    if pow_:
        shocks.append(lc.Captivity(x=mag.captivity_months / 12.0 / amap.years_per_unit))
    if displaced:
        age_at = mag.displacement_year - birth_year
        d = max(0.0, amap.to_model(age_at))
        shocks.append(lc.Displacement(lam=mag.displacement_lam, delta=mag.displacement_delta,
                                      d=d, theta_scale=mag.displacement_theta_scale))
    shocks = tuple(shocks)
    try:
        plan = solver.plan(shocks)
    except BenPorathError as exc:
        raise AgentSolveError(agent_id, exc) from exc

    x = sum(s.x for s in shocks if isinstance(s, lc.Captivity))
    school_end = amap.to_age(plan.s)
    work_start = amap.to_age(plan.s + x)
    exit_age = amap.to_age(plan.R)
    if cfg.noise.exit_jitter_sd > 0:
        # truncated so the exit stays inside [work_start, model_one_age]
        exit_age = min(max(exit_age + cfg.noise.exit_jitter_sd * z, work_start), amap.model_one_age)

    states = []
    for age, gap in zip(cfg.ages, gaps):
        if age < school_end:
            state = "education"
        elif not participates or age < work_start or age >= exit_age:
            state = "out"
        else:
            state = "unemployment" if gap else "employment"
        states.append((int(age), state))
    return AgentRecord(agent_id, birth_year, female, shocks, plan, tuple(states))


def _simulate_ids(args) -> list[AgentRecord]:
    config, prefs, tech, ids = args
    solver = _Solver(config, prefs, tech)
    return [_draw_agent(solver, i) for i in ids]


def simulate_cohort(config: CohortConfig, prefs: lc.Preferences, tech: lc.Technology,
                    workers: int = 1) -> list[AgentRecord]:
    """Simulate ``config.n_agents`` agents; output is identical for any ``workers``."""
    ids = list(range(config.n_agents))
    if workers <= 1 or config.n_agents < 2 * workers:
        return _simulate_ids((config, prefs, tech, ids))
    chunks = [ids[k::workers] for k in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_simulate_ids, [(config, prefs, tech, c) for c in chunks]))
    agents = [a for part in parts for a in part]
    agents.sort(key=lambda a: a.id)
    return agents


def to_panel(agents: Sequence[AgentRecord]) -> pd.DataFrame:
    """Long format, one row per agent and age, in the panel CSV schema."""
    records = []
    for agent in agents:
        exit_flags = derive_exit_indicator(agent.states)
        for (age, state), exited in zip(agent.states, exit_flags):
            records.append((agent.id, agent.birth_year, age, agent.birth_year + age, state, exited,
                            int(agent.displaced), int(agent.injured), int(agent.pow), int(agent.female)))
    return pd.DataFrame.from_records(records, columns=list(PANEL_COLUMNS))


def states_from_panel(panel: pd.DataFrame) -> dict:
    """Inverse of :func:`to_panel` for the state sequences."""
    out = {}
    for agent_id, rows in panel.sort_values(["id", "age"]).groupby("id", sort=True):
        out[agent_id] = tuple(zip(rows["age"].astype(int).tolist(), rows["state"].tolist()))
    return out


def lifecycle_profile(panel: pd.DataFrame, group_by: Optional[str] = None) -> pd.DataFrame:
    """Share of each state by age (and optionally by a group column)."""
    if panel is None or len(panel) == 0:
        raise EmptyPanel("cannot profile an empty panel")
    keys = ([group_by] if group_by else []) + ["age"]
    counts = (panel.groupby(keys + ["state"]).size()
              .unstack("state", fill_value=0)
              .reindex(columns=list(STATES), fill_value=0))
    shares = counts.div(counts.sum(axis=1), axis=0)
    return (shares.stack().rename("share").reset_index()
            .sort_values(keys + ["state"], key=lambda col: col.map(STATES.index) if col.name == "state" else col)
            .reset_index(drop=True))


def write_panel_csv(panel: pd.DataFrame, path: Union[str, Path]) -> None:
    panel.loc[:, list(PANEL_COLUMNS)].to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
