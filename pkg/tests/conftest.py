from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tte_estimands import TrialDataset
from tte_estimands.io import load_dataset, load_ices

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance lines after the run so they survive output capture."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def figure1_raw() -> TrialDataset:
    """The six illustrative subjects, all in arm 1, K = 12."""
    return load_dataset(FIXTURES / "figure1_raw.csv")


@pytest.fixture
def figure1_ices():
    return load_ices(FIXTURES / "figure1_ices.csv")


def discrete_trial(rng: np.random.Generator, n: int, K: int, n_baseline: int = 1, n_time: int = 0,
                   censor: float = 0.1, switch: float = 0.0) -> TrialDataset:
    """Binary-covariate trial with logistic hazards for event and censoring.

    ``switch`` is the per-follow-up probability of leaving the assigned arm
    for good; it lets regime-following differ from arm membership.
    """
    W = rng.integers(0, 2, size=(n, n_baseline)).astype(float)
    arm = rng.integers(0, 2, size=n).astype(float)
    A = np.repeat(arm[:, None], K, axis=1)
    C = np.zeros((n, K), dtype=np.int8)
    Y = np.zeros((n, K))
    L = np.full((n, K - 1, n_time), np.nan)
    wsum = W.sum(axis=1)
    alive = np.ones(n, dtype=bool)
    on = np.ones(n, dtype=bool)
    for t in range(1, K + 1):
        if t > 1 and switch:
            leave = on & (rng.uniform(size=n) < switch)
            on &= ~leave
            A[leave, t - 1:] = 1.0 - arm[leave, None]
        lsum = np.nansum(L[:, t - 2], axis=1) if (t > 1 and n_time) else 0.0
        pc = censor * (1.0 + 0.5 * wsum) * (1.2 - 0.4 * arm)
        cens = alive & (rng.uniform(size=n) < pc)
        C[cens, t - 1:] = 1
        Y[cens, t - 1:] = np.nan
        if n_time:
            L[cens, t - 1:] = np.nan
        alive &= ~cens
        p = 1.0 / (1.0 + np.exp(-(-1.8 + 0.6 * wsum - 0.7 * A[:, t - 1] + 0.5 * lsum)))
        ev = alive & (rng.uniform(size=n) < p)
        Y[ev, t - 1:] = 1.0
        alive &= ~ev
        if n_time and t < K:
            obs = C[:, t - 1] == 0
            pl = 0.3 + 0.3 * (W[:, 0] if n_baseline else 0.0)
            draw = (rng.uniform(size=(n, n_time)) < np.asarray(pl).reshape(-1, 1)).astype(float)
            L[obs, t - 1] = draw[obs]
    return TrialDataset(ids=[f"s{i}" for i in range(n)], W=W, A=A, C=C, Y=Y, L=L)
