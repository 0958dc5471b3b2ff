"""Run configuration: TOML (or manifest JSON) files validated before execution."""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import cohort as cs
from . import lifecycle as lc
from .exceptions import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


Probability = Field(ge=0.0, le=1.0)


class PreferencesConfig(_Strict):
    r: float = Field(1.0, gt=0)
    T: float = Field(1.0, gt=0)
    utility: Literal["log"] = "log"

    def build(self) -> lc.Preferences:
        return lc.Preferences(rho=self.r, r=self.r, T=self.T, utility=lc.Utility(self.utility))


class TechnologyConfig(_Strict):
    theta_slope: float = Field(1 / 0.3, gt=0)
    theta_intercept: float = 0.0
    disutility_scale: float = Field(1.0, ge=1.0)

    def build(self) -> lc.Technology:
        return lc.Technology(theta=lc.LinearLearning(self.theta_slope, self.theta_intercept),
                             disutility_scale=self.disutility_scale)


class ShockConfig(_Strict):
    kind: Optional[Literal["injury", "captivity", "displacement"]] = None
    kappa: float = Field(1.2, gt=1.0)
    x: float = Field(0.1, ge=0.0)
    lam: float = Field(0.9, gt=0.0, le=1.0, alias="lambda")
    delta: float = Field(0.0, ge=0.0)
    d: float = Field(0.0, ge=0.0)
    theta_scale: float = Field(1.0, gt=0.0, le=1.0)
    fix_schooling: bool = False

    def build(self):
        if self.kind == "injury":
            return lc.Injury(kappa=self.kappa)
        if self.kind == "captivity":
            return lc.Captivity(x=self.x)
        if self.kind == "displacement":
            return lc.Displacement(lam=self.lam, delta=self.delta, d=self.d, theta_scale=self.theta_scale)
        return None


class FiguresConfig(_Strict):
    s_min: float = Field(0.0, ge=0.0)
    s_max: float = Field(0.6, gt=0.0)
    n_s: int = Field(121, ge=2)
    d2_theta_slope: float = Field(4.0, gt=0)
    d2_displaced_scale: float = Field(0.75, gt=0.0, le=1.0)
    d2_ages: Tuple[float, ...] = (0.5, 0.55, 0.6)
    d2_R_min: float = 0.40
    d2_R_max: float = 0.95
    d2_n_R: int = Field(111, ge=2)


class PrevalenceConfig(_Strict):
    injury: float = Field(cs.DEFAULT_PREVALENCE["injury"], ge=0.0, le=1.0)
    captivity_gt6m: float = Field(cs.DEFAULT_PREVALENCE["captivity_gt6m"], ge=0.0, le=1.0)
    displacement: float = Field(cs.DEFAULT_PREVALENCE["displacement"], ge=0.0, le=1.0)

    def build(self) -> cs.Prevalence:
        return cs.Prevalence(**self.model_dump())


class AgeMapConfig(_Strict):
    model_zero_age: float = 14.0
    model_one_age: float = 78.0

    @model_validator(mode="after")
    def _ordered(self):
        if not self.model_zero_age < self.model_one_age:
            raise ValueError("model_zero_age must be below model_one_age")
        return self


class NoiseConfig(_Strict):
    exit_jitter_sd: float = Field(0.0, ge=0.0)
    employment_gap_prob: float = Field(0.0, ge=0.0, le=1.0)


class MagnitudesConfig(_Strict):
    injury_kappa: float = Field(1.2, gt=1.0)
    captivity_months: float = Field(cs.CAPTIVITY_MONTHS, ge=0.0)
    displacement_lam: float = Field(0.9, gt=0.0, le=1.0)
    displacement_delta: float = Field(0.0, ge=0.0)
    displacement_theta_scale: float = Field(1.0, gt=0.0, le=1.0)
    displacement_year: int = 1945


class CohortSection(_Strict):
    birth_years: Tuple[int, int] = (1919, 1921)
    n_agents: int = Field(1000, ge=1)
    prevalence: PrevalenceConfig = PrevalenceConfig()
    age_map: AgeMapConfig = AgeMapConfig()
    noise: NoiseConfig = NoiseConfig()
    magnitudes: MagnitudesConfig = MagnitudesConfig()
    female_share: float = Field(0.0, ge=0.0, le=1.0)
    female_prevalence: PrevalenceConfig = PrevalenceConfig(injury=0.0, captivity_gt6m=0.0)
    female_participation: float = Field(1.0, ge=0.0, le=1.0)

    @field_validator("birth_years")
    @classmethod
    def _years(cls, v):
        if v[0] > v[1]:
            raise ValueError("birth_years must be (first, last) with first <= last")
        return v

    def build(self, seed: int) -> cs.CohortConfig:
        return cs.CohortConfig(
            birth_years=tuple(self.birth_years), n_agents=self.n_agents, seed=seed,
            prevalence=self.prevalence.build(),
            age_map=cs.AgeMap(**self.age_map.model_dump()),
            noise=cs.Noise(**self.noise.model_dump()),
            magnitudes=cs.ShockMagnitudes(**self.magnitudes.model_dump()),
            female_share=self.female_share,
            female_prevalence=self.female_prevalence.build(),
            female_participation=self.female_participation,
        )


class EstimateSection(_Strict):
    panel: Optional[str] = None
    method: Literal["event_study", "did_immediate", "did_total", "balance", "correlation"] = "did_immediate"
    treatment: str = "displaced"
    outcome: Optional[str] = None
    ages: Optional[Tuple[int, int]] = None
    controls: List[str] = []
    covariates: List[str] = []
    columns: List[str] = ["injured", "pow", "displaced"]
    pre_year: int = 1938
    post_year: int = 1946
    retirement_age: int = 65
    error_cap: int = Field(100, ge=0)


class SweepSection(_Strict):
    shock: Literal["injury", "captivity", "displacement"] = "injury"
    parameter: Literal["kappa", "x", "lambda", "delta", "d", "theta_scale"] = "kappa"
    values: List[float] = [1.1, 1.2, 1.3, 1.4]


class RunConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    out: Optional[str] = None
    workers: Optional[int] = Field(None, ge=1)
    preferences: PreferencesConfig = PreferencesConfig()
    technology: TechnologyConfig = TechnologyConfig()
    shock: ShockConfig = ShockConfig()
    figures: FiguresConfig = FiguresConfig()
    cohort: CohortSection = CohortSection()
    estimate: EstimateSection = EstimateSection()
    sweep: SweepSection = SweepSection()


def format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "invalid configuration:\n  " + "\n  ".join(lines)


def load_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(text)
            # a run manifest carries the resolved config under "config"
            return data["config"] if "config" in data and "artifacts" in data else data
        return tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def _set_path(data: dict, dotted: str, value) -> None:
    node = data
    keys = dotted.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted}: {key} is not a section")
    node[keys[-1]] = value


def resolve(raw: Optional[dict], overrides: dict) -> RunConfig:
    """Merge flag overrides (dotted keys) into the file values and validate."""
    data = json.loads(json.dumps(raw or {}))
    for key, value in overrides.items():
        if value is not None:
            _set_path(data, key, value)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from None
