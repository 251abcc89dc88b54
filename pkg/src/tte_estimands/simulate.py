"""Synthetic two-arm trials with exponential-noise event times.

Event, censoring and ICE times follow

    T = exp(b0 + a * A + W @ coef) * (2 + eps),    eps ~ Exp(rate)

with ``W1 ~ Unif(0, 1)`` and any further covariates ``N(0, 1)``.  Every
random quantity has its own stream seeded from ``(seed, stream_index)``, so
observed and potential-outcome draws share noise exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .data import TrialDataset, apply_conventions
from .discretize import discretize_times, ice_months
from .strategies import IceRecord

STREAM_W, STREAM_Y, STREAM_C, STREAM_I, STREAM_L = range(5)

PROSE_COEF_Y = (0.5, 0.5)
CODE_COEF_Y = (-0.5, 0.5)


def stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


@dataclass(frozen=True)
class DgpConfig:
    n: int = 400
    K: int = 10
    coef_y: tuple = PROSE_COEF_Y
    coef_c: tuple = (0.25, -0.5)
    coef_i: tuple = (-0.1, -0.2)
    coef_a: float = -0.5
    coef_a_ice: float = 0.0
    intercept_y: float = 1.0
    intercept_c: float = 1.0
    intercept_i: float = 1.0
    rate_y: float = 1.0
    rate_c: float = 2.0
    rate_i: float = 3.0
    seed: int = 123
    censoring: bool = True
    ice: bool = True
    ice_kind: str = "ice"
    ice_terminal: bool = False
    ice_stops_treatment: bool = False
    n_time_covariates: int = 0
    time_covariate_sd: float = 0.5
    censor_timing: str = "continuous"

    def __post_init__(self):
        for name in ("coef_y", "coef_c", "coef_i"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        p = len(self.coef_y)
        if len(self.coef_c) != p or len(self.coef_i) != p:
            raise ValueError("coef_y, coef_c and coef_i must have the same length")
        if self.n < 2 or self.n % 2:
            raise ValueError("n must be a positive even number (two equal arms)")
        if self.censor_timing not in ("continuous", "interval_start"):
            raise ValueError("censor_timing is 'continuous' or 'interval_start'")
        if self.K < 1:
            raise ValueError("K must be positive")
        for name in ("rate_y", "rate_c", "rate_i"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive (inf disables the noise)")

    @classmethod
    def appendix(cls, variant: str = "prose", **overrides) -> "DgpConfig":
        """Defaults of the reference simulation; ``variant="code"`` flips the W1 sign."""
        if variant not in ("prose", "code"):
            raise ValueError("variant is 'prose' or 'code'")
        base = {"coef_y": PROSE_COEF_Y if variant == "prose" else CODE_COEF_Y}
        base.update(overrides)
        return cls(**base)

    @property
    def p(self) -> int:
        return len(self.coef_y)


def _covariates(cfg: DgpConfig) -> np.ndarray:
    rng = stream(cfg.seed, STREAM_W)
    W = np.empty((cfg.n, cfg.p))
    if cfg.p:
        W[:, 0] = rng.uniform(size=cfg.n)
        if cfg.p > 1:
            W[:, 1:] = rng.standard_normal((cfg.n, cfg.p - 1))
    return W


def _noise(cfg: DgpConfig, index: int, rate: float) -> np.ndarray:
    scale = 0.0 if math.isinf(rate) else 1.0 / rate
    return stream(cfg.seed, index).exponential(scale=scale, size=cfg.n) if scale else np.zeros(cfg.n)


def _arms(cfg: DgpConfig) -> np.ndarray:
    return np.repeat([0.0, 1.0], cfg.n // 2)


def _times(cfg: DgpConfig, W, A):
    lp_y = cfg.intercept_y + cfg.coef_a * A + W @ np.array(cfg.coef_y)
    tY = np.exp(lp_y) * (2.0 + _noise(cfg, STREAM_Y, cfg.rate_y))
    if cfg.censoring:
        tC = np.exp(cfg.intercept_c + W @ np.array(cfg.coef_c)) * (2.0 + _noise(cfg, STREAM_C, cfg.rate_c))
    else:
        tC = np.full(cfg.n, np.inf)
    if cfg.ice:
        lp_i = cfg.intercept_i + cfg.coef_a_ice * A + W @ np.array(cfg.coef_i)
        tI = np.exp(lp_i) * (2.0 + _noise(cfg, STREAM_I, cfg.rate_i))
    else:
        tI = np.full(cfg.n, np.inf)
    return tY, tC, tI


def _discretize(cfg: DgpConfig, tY, tC):
    big = np.finfo(float).max
    tC = np.where(np.isinf(tC), big, tC)
    if cfg.censor_timing == "interval_start":
        # censoring during month c removes the subject before Y(c) is assessed
        c = np.where(tC >= big, big, np.floor(tC) + 1.0)
        tY = np.where(np.ceil(tY) >= c, big, tY)
        tC = c
    return discretize_times(cfg.K, tY, tC)


@dataclass(frozen=True)
class SimulatedTrial:
    dataset: TrialDataset
    tY: np.ndarray
    tC: np.ndarray
    tI: np.ndarray
    T: np.ndarray
    delta: np.ndarray
    ice_month: np.ndarray
    ices: tuple = field(default=())


def simulate_trial(cfg: DgpConfig) -> SimulatedTrial:
    """Simulate one trial; the first ``n/2`` subjects are controls."""
    W = _covariates(cfg)
    A0 = _arms(cfg)
    tY, tC, tI = _times(cfg, W, A0)
    T, delta, rows = _discretize(cfg, tY, tC)
    ice = ice_months(cfg.K, T, tI) if cfg.ice else np.zeros(cfg.n, dtype=int)
    K = cfg.K
    cols = np.arange(1, K + 1)[None, :]
    if cfg.ice and cfg.ice_terminal:
        # a terminal ICE before the primary event ends follow-up
        stop = (ice > 0) & ((ice < T) | (delta == 0))
        rows = np.where(stop[:, None] & (cols >= ice[:, None]), np.nan, rows)
    C = np.isnan(rows).astype(np.int8)
    A = np.repeat(A0[:, None], K, axis=1)
    if cfg.ice and cfg.ice_stops_treatment:
        off = (ice > 0)[:, None] & (np.arange(K)[None, :] >= ice[:, None])
        A = np.where(off, np.nan, A)
    L = None
    tnames = ()
    if cfg.n_time_covariates:
        q = cfg.n_time_covariates
        rng = stream(cfg.seed, STREAM_L)
        src = W[:, np.arange(q) % cfg.p] if cfg.p else np.zeros((cfg.n, q))
        L = src[:, None, :] + cfg.time_covariate_sd * rng.standard_normal((cfg.n, K - 1, q))
        tnames = tuple(f"lsyn{j + 1}" for j in range(q))
    ds = TrialDataset(
        ids=[str(i + 1) for i in range(cfg.n)], W=W, A=A, C=C, Y=rows, L=L,
        covariate_names=tuple(f"W{j + 1}" for j in range(cfg.p)),
        time_covariate_names=tnames,
        treatment_labels=((0, "control"), (1, "treated")),
    )
    ds = apply_conventions(ds)
    ices = tuple(IceRecord(str(i + 1), cfg.ice_kind, int(m), cfg.ice_terminal)
                 for i, m in enumerate(ice) if m > 0)
    return SimulatedTrial(ds, tY, tC, tI, T, delta, ice, ices)


@dataclass(frozen=True)
class PotentialOutcomes:
    W: np.ndarray
    arm: np.ndarray
    tY1: np.ndarray
    tY0: np.ndarray
    tI1: np.ndarray
    tI0: np.ndarray

    def survival(self, K: int, arm: int) -> np.ndarray:
        """Per-subject indicator ``1 - Y^a(K)``: no primary event by follow-up K."""
        t = self.tY1 if arm == 1 else self.tY0
        return (np.ceil(t) > K).astype(float)

    def ice_indicator(self, K: int, arm: int) -> np.ndarray:
        t = self.tI1 if arm == 1 else self.tI0
        return (np.ceil(t) <= K).astype(int)


def simulate_potential(cfg: DgpConfig) -> PotentialOutcomes:
    """Both potential event times per subject, sharing covariates and noise."""
    W = _covariates(cfg)
    tY1, _, tI1 = _times(cfg, W, np.ones(cfg.n))
    tY0, _, tI0 = _times(cfg, W, np.zeros(cfg.n))
    return PotentialOutcomes(W, _arms(cfg), tY1, tY0, tI1, tI0)


def monte_carlo_survival(cfg: DgpConfig, K: int | None = None, arm: int = 1) -> tuple[float, float]:
    """Oracle ``E[1 - Y^a(K)]`` and its Monte Carlo standard error."""
    K = cfg.K if K is None else K
    s = simulate_potential(cfg).survival(K, arm)
    return float(s.mean()), float(s.std(ddof=1) / math.sqrt(len(s)))


STRATA = ("AA", "AD", "DA", "DD")


def classify_principal_strata(ice_treated, ice_control) -> np.ndarray:
    """Label each subject by potential ICE status under (treated, control).

    ``A`` means the ICE would not occur by the horizon, ``D`` that it would.
    """
    y1 = np.asarray(ice_treated)
    y0 = np.asarray(ice_control)
    if y1.shape != y0.shape:
        raise ValueError("potential indicators must align")
    if y1.dtype.kind == "f" and (np.isnan(y1).any() or np.isnan(y0).any()):
        raise ValueError("potential ICE indicators are missing")
    if not (np.isin(y1, (0, 1)).all() and np.isin(y0, (0, 1)).all()):
        raise ValueError("potential ICE indicators must be 0/1")
    labels = np.array(STRATA, dtype=object)
    return labels[2 * y1.astype(int) + y0.astype(int)]


def sace_oracle(potential: PotentialOutcomes, K: int) -> float:
    """Survivor average causal effect over the always-alive stratum."""
    strata = classify_principal_strata(potential.ice_indicator(K, 1), potential.ice_indicator(K, 0))
    aa = strata == "AA"
    if not aa.any():
        return float("nan")
    return float(potential.survival(K, 1)[aa].mean() - potential.survival(K, 0)[aa].mean())
