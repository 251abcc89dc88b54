"""Contrasts between arms and a subject-level bootstrap."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import TrialDataset
from .results import EstimateResult, normal_ci


def contrast(treated: EstimateResult, control: EstimateResult, label: str | None = None) -> EstimateResult:
    """Difference ``treated - control`` with standard errors combined as independent."""
    diff = treated.point - control.point
    se = math.sqrt(treated.se ** 2 + control.se ** 2)
    name = label or f"{treated.estimand} difference"
    return EstimateResult(name, diff, se, normal_ci(diff, se), f"contrast[{treated.method}]",
                          treated.n_used + control.n_used, scale="difference",
                          diagnostics={"treated": treated.point, "control": control.point})


@dataclass(frozen=True)
class BootstrapResult:
    se: float
    ci95: tuple
    replicates: np.ndarray
    n_failed: int


def bootstrap_se(ds: TrialDataset, estimator, B: int = 500, seed: int = 0,
                 max_fail_frac: float = 0.1) -> BootstrapResult:
    """Resample subjects with replacement and recompute ``estimator(ds)``.

    Replicates that raise are counted in ``n_failed`` and dropped.  Raises
    ``RuntimeError`` if more than ``max_fail_frac`` of them fail.  The
    interval is the percentile interval.
    """
    if B < 2:
        raise ValueError("need at least two bootstrap replicates")
    children = np.random.SeedSequence(seed).spawn(B)
    vals = []
    failed = 0
    for child in children:
        rows = np.random.default_rng(child).integers(0, ds.n, ds.n)
        try:
            vals.append(float(estimator(ds.take(rows, relabel=True))))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            failed += 1
    if failed > max_fail_frac * B:
        raise RuntimeError(f"{failed} of {B} bootstrap replicates failed")
    reps = np.asarray(vals)
    se = float(reps.std(ddof=1))
    lo, hi = np.quantile(reps, [0.025, 0.975])
    return BootstrapResult(se, (float(lo), float(hi)), reps, failed)
