"""Versioned JSON configuration for the command-line pipelines."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TimelineConfig(_Strict):
    K: int = Field(10, ge=1)
    unit: str = "month"


class DgpSection(_Strict):
    n: int = Field(400, ge=2)
    variant: Literal["prose", "code"] = "prose"
    coef_y: Optional[list[float]] = None
    coef_c: list[float] = [0.25, -0.5]
    coef_i: list[float] = [-0.1, -0.2]
    coef_a: float = -0.5
    coef_a_ice: float = 0.0
    intercept_y: float = 1.0
    intercept_c: float = 1.0
    intercept_i: float = 1.0
    rate_y: float = Field(1.0, gt=0)
    rate_c: float = Field(2.0, gt=0)
    rate_i: float = Field(3.0, gt=0)
    censoring: bool = True
    ice: bool = True
    ice_kind: str = "ice"
    ice_terminal: bool = False
    ice_stops_treatment: bool = False
    n_time_covariates: int = Field(0, ge=0)
    censor_timing: Literal["continuous", "interval_start"] = "continuous"

    @field_validator("n")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("n must be even (two equal arms)")
        return v


class EstimandConfig(_Strict):
    summary: Literal["survival_at_k", "survival_difference", "cif_at_k"] = "survival_difference"
    arms: list[int] = [1, 0]
    horizon: Optional[int] = Field(None, ge=1)
    while_on_treatment_k: Optional[int] = Field(None, ge=1)


class HistoryConfig(_Strict):
    baseline: Optional[list[str]] = None
    time_varying: Optional[list[str]] = None
    l_history: Literal["all", "last"] = "all"
    degree: Literal[1, 2] = 1


class EstimatorConfig(_Strict):
    method: Literal["km", "ipcw", "gcomp", "tmle", "aalen_johansen"] = "km"
    outcome_model: Literal["logistic", "saturated"] = "logistic"
    censor_model: Literal["logistic", "saturated"] = "saturated"
    treatment_model: Literal["empirical", "logistic", "saturated"] = "empirical"
    weight_floor: float = Field(0.01, gt=0, lt=1)
    n_boot: int = Field(200, ge=0)
    history: HistoryConfig = HistoryConfig()


class MiConfig(_Strict):
    assumption: Literal["CAR", "CR", "J2R"] = "CAR"
    m: int = Field(20, ge=2)
    reference_arm: Optional[int] = None
    by_kind: dict[str, Literal["CAR", "CR", "J2R"]] = {}
    default: Literal["CAR", "CR", "J2R"] = "CAR"

    @model_validator(mode="after")
    def _reference(self):
        used = {self.assumption, self.default, *self.by_kind.values()}
        if used & {"CR", "J2R"} and self.reference_arm is None:
            raise ValueError("reference_arm is required for CR and J2R")
        return self


class PipelineConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = 123
    timeline: TimelineConfig = TimelineConfig()
    censor_encoding: Literal["01", "labels"] = "01"
    covariates: Optional[list[str]] = None
    time_covariates: Optional[list[str]] = None
    dgp: DgpSection = DgpSection()
    plan: list[tuple[str, str]] = []
    estimand: EstimandConfig = EstimandConfig()
    estimator: EstimatorConfig = EstimatorConfig()
    mi: MiConfig = MiConfig()
    format: Literal["json", "csv"] = "json"

    @field_validator("plan")
    @classmethod
    def _plan(cls, v):
        from .strategies import Strategy

        kinds = [k for k, _ in v]
        if len(set(kinds)) != len(kinds):
            raise ValueError("each ICE kind may appear once")
        for _, s in v:
            Strategy(s)
        return v


class ConfigError(ValueError):
    """Configuration problem; ``path`` is the dotted location of the bad field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def _loc(err) -> str:
    return ".".join(str(p) for p in err["loc"])


def parse_config(data: dict) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(_loc(first), first["msg"]) from None


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be an object")
    return parse_config(data)
