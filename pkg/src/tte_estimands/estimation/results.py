from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

_RANGES = {"probability": (0.0, 1.0), "difference": (-1.0, 1.0)}
_SLACK = 1e-12


class IdentifiabilityError(ValueError):
    pass


def normal_ci(point: float, se: float, level: float = 0.95) -> tuple[float, float]:
    if not math.isfinite(se):
        return (float("nan"), float("nan"))
    z = stats.norm.ppf(0.5 + level / 2)
    return (point - z * se, point + z * se)


@dataclass(frozen=True)
class EstimateResult:
    estimand: str
    point: float
    se: float
    ci95: tuple
    method: str
    n_used: int
    scale: str = "probability"
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lo, hi = _RANGES[self.scale]
        if not (lo - _SLACK <= self.point <= hi + _SLACK):
            raise ValueError(f"{self.estimand}: point {self.point} outside [{lo}, {hi}]")
        object.__setattr__(self, "point", float(min(max(self.point, lo), hi)))
        if not (self.se >= 0 or math.isnan(self.se)):
            raise ValueError("standard error must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand,
            "method": self.method,
            "point": self.point,
            "se": None if math.isnan(self.se) else self.se,
            "ci95": [None if math.isnan(v) else v for v in self.ci95],
            "n_used": self.n_used,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass(frozen=True)
class SurvivalCurve:
    times: np.ndarray
    survival: np.ndarray
    se: np.ndarray
    n_risk: np.ndarray
    n_event: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.survival) > 0):
            raise ValueError("survival curve must be non-increasing")

    def at(self, t: int) -> float:
        return float(self.survival[t - 1])

    def table(self) -> list[dict]:
        return [{"t": int(t), "survival": float(s), "se": float(e), "n_risk": int(r), "n_event": int(d)}
                for t, s, e, r, d in zip(self.times, self.survival, self.se, self.n_risk, self.n_event)]
