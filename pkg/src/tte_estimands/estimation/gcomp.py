"""Iterated conditional expectation (sequential regression) g-computation.

Working backwards from the horizon, each stage regresses the current
pseudo-outcome on the history among subjects alive, uncensored and on the
regime, then predicts with treatment set to the regime.  Subjects with an
earlier event carry a pseudo-outcome of 1.  The event probability under the
regime is the mean of the first-stage predictions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from ..data import TrialDataset
from ..strategies import RegimeSpec
from .design import HistorySpec, alive_before, follows, independent_columns, uncensored_through, with_intercept
from .logistic import SeparationWarning, fit_logistic
from .results import EstimateResult, IdentifiabilityError, normal_ci

_CLIP = 1e-10


@dataclass
class Stage:
    t: int
    fit_rows: np.ndarray
    pred_rows: np.ndarray
    features_fit: np.ndarray
    features_pred: np.ndarray
    event_fit: np.ndarray
    notes: list = field(default_factory=list)


@dataclass
class GcompFit:
    """Stage layout and initial predictions kept for the targeting step."""

    ds: TrialDataset
    regime: RegimeSpec
    horizon: int
    model: str
    stages: dict
    q_fit: dict
    q_pred: dict
    pseudo: dict
    event_prob: float


def _stage_layout(ds: TrialDataset, regime: RegimeSpec, horizon: int, hist: HistorySpec) -> dict:
    abar = regime.abar
    stages = {}
    for t in range(horizon, 0, -1):
        fit = (alive_before(ds, t) & uncensored_through(ds, t - 1) & follows(ds, abar, t))
        if t == 1:
            pred = np.ones(ds.n, dtype=bool)
        else:
            pred = alive_before(ds, t) & uncensored_through(ds, t - 2) & follows(ds, abar, t - 1)
        fit_idx = np.flatnonzero(fit)
        pred_idx = np.flatnonzero(pred)
        if not len(fit_idx):
            raise IdentifiabilityError(f"stage t={t}: no uncensored subjects on the regime")
        ev = ds.Y[fit_idx, t - 1] == 1
        stages[t] = Stage(t, fit_idx, pred_idx, hist.features(ds, t, fit_idx),
                          hist.features(ds, t, pred_idx), ev)
    return stages


def _cells(F_fit, F_pred):
    both = np.vstack([F_fit, F_pred]) if F_fit.shape[1] else np.zeros((len(F_fit) + len(F_pred), 1))
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv[: len(F_fit)], inv[len(F_fit):]


def _fit_predict(stage: Stage, pseudo: np.ndarray, model: str):
    """Initial outcome regression for one stage.

    Returns predictions on the fitting rows and on the prediction rows.
    """
    if model == "saturated":
        cf, cp = _cells(stage.features_fit, stage.features_pred)
        ncell = int(max(cf.max(initial=-1), cp.max(initial=-1))) + 1
        tot = np.bincount(cf, weights=pseudo, minlength=ncell)
        cnt = np.bincount(cf, minlength=ncell)
        if (cnt[cp] == 0).any():
            raise IdentifiabilityError(f"stage t={stage.t}: history stratum with no regime followers")
        mean = tot / np.maximum(cnt, 1)
        return mean[cf], mean[cp]
    if model != "logistic":
        raise ValueError(f"unknown outcome model {model!r}")
    if np.all(pseudo == pseudo[0]) and pseudo[0] in (0.0, 1.0):
        return np.full(len(pseudo), pseudo[0]), np.full(len(stage.pred_rows), pseudo[0])
    Xf = with_intercept(stage.features_fit)
    keep = independent_columns(Xf)
    Xp = with_intercept(stage.features_pred)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SeparationWarning)
        fit = fit_logistic(Xf[:, keep], pseudo)
    if caught:
        stage.notes.append("separation")
    if not fit.converged and not fit.separated:
        stage.notes.append("nonconvergence")
    return fit.predict(Xf[:, keep]), fit.predict(Xp[:, keep])


def _backward(stages, ds, horizon, model, fluct_weights=None):
    """One backward pass; returns per-stage fitted/predicted values and pseudo-outcomes."""
    q_fit, q_pred, pseudo_all, eps_all = {}, {}, {}, {}
    nxt = None
    for t in range(horizon, 0, -1):
        st = stages[t]
        if t == horizon:
            pseudo = ds.Y[st.fit_rows, t - 1].astype(float)
        else:
            # stage t+1 prediction rows are the survivors among these fitting rows
            lookup = np.full(ds.n, np.nan)
            lookup[stages[t + 1].pred_rows] = nxt
            pseudo = np.where(st.event_fit, 1.0, lookup[st.fit_rows])
        qf, qp = _fit_predict(st, pseudo, model)
        if fluct_weights is not None:
            qf, qp, eps = _fluctuate(qf, qp, pseudo, fluct_weights[st.fit_rows, t - 1])
            eps_all[t] = eps
        q_fit[t], q_pred[t], pseudo_all[t] = qf, qp, pseudo
        nxt = qp
    return q_fit, q_pred, pseudo_all, eps_all


def _fluctuate(qf, qp, pseudo, h):
    off_f = logit(np.clip(qf, _CLIP, 1 - _CLIP))
    off_p = logit(np.clip(qp, _CLIP, 1 - _CLIP))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        fit = fit_logistic(np.ones((len(qf), 1)), pseudo, weights=h, offset=off_f)
    if not fit.converged:
        raise _FluctuationFailed()
    eps = float(fit.coefficients[0])
    return expit(off_f + eps), expit(off_p + eps), eps


class _FluctuationFailed(RuntimeError):
    pass


def gcomp_fit(ds: TrialDataset, regime: RegimeSpec, horizon: int | None = None,
              history: HistorySpec | None = None, model: str = "logistic") -> GcompFit:
    """Run the untargeted backward recursion and keep its intermediate fits."""
    t_star = ds.K if horizon is None else horizon
    if not 1 <= t_star <= ds.K:
        raise ValueError(f"horizon {t_star} outside 1..{ds.K}")
    if len(regime.abar) < t_star:
        raise ValueError("regime shorter than horizon")
    hist = history or HistorySpec()
    stages = _stage_layout(ds, regime, t_star, hist)
    q_fit, q_pred, pseudo, _ = _backward(stages, ds, t_star, model)
    return GcompFit(ds, regime, t_star, model, stages, q_fit, q_pred, pseudo, float(q_pred[1].mean()))


def seq_gcomp(ds: TrialDataset, regime: RegimeSpec, horizon: int | None = None,
              history: HistorySpec | None = None, model: str = "logistic",
              n_boot: int = 500, seed: int = 0) -> EstimateResult:
    """Survival at ``horizon`` under ``regime`` by sequential regression.

    ``model`` is ``"logistic"`` (fractional-response logistic on the history
    columns chosen by ``history``) or ``"saturated"`` (stratum means over the
    discrete history).  The standard error comes from a subject-level
    bootstrap with ``n_boot`` replicates; ``n_boot=0`` skips it.
    """
    fit = gcomp_fit(ds, regime, horizon, history, model)
    point = 1.0 - fit.event_prob
    diag = {"model": model, "stage_notes": {t: s.notes for t, s in fit.stages.items() if s.notes}}
    se, ci = float("nan"), (float("nan"), float("nan"))
    if n_boot:
        from .inference import bootstrap_se
        boot = bootstrap_se(ds, lambda d: 1.0 - gcomp_fit(d, regime, fit.horizon, history, model).event_prob,
                            B=n_boot, seed=seed)
        se, ci = boot.se, boot.ci95
        diag["bootstrap_failures"] = boot.n_failed
    return EstimateResult(f"S({fit.horizon})", point, se, ci, f"seq_gcomp[{model}]", ds.n, diagnostics=diag)


def targeted_update(fit: GcompFit, weights: np.ndarray) -> EstimateResult:
    """One logistic fluctuation per stage, weighted by inverse cumulative probabilities.

    Each stage's initial fit is refit on the targeted pseudo-outcome of the
    following stage, then shifted on the logit scale by an intercept-only
    weighted logistic regression.  The standard error uses the efficient
    influence curve.  If a fluctuation fails to converge the untargeted
    estimate is returned with ``diagnostics["targeted"] = False``.
    """
    ds, horizon = fit.ds, fit.horizon
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (ds.n, horizon):
        raise ValueError(f"weights must have shape ({ds.n}, {horizon})")
    try:
        q_fit, q_pred, pseudo, eps = _backward(fit.stages, ds, horizon, fit.model, fluct_weights=weights)
    except _FluctuationFailed:
        point = 1.0 - fit.event_prob
        return EstimateResult(f"S({horizon})", point, float("nan"), (float("nan"),) * 2,
                              "targeted[fallback]", ds.n, diagnostics={"targeted": False})
    psi = float(q_pred[1].mean())
    ic = q_pred[1] - psi
    for t, st in fit.stages.items():
        contrib = weights[st.fit_rows, t - 1] * (pseudo[t] - q_fit[t])
        np.add.at(ic, st.fit_rows, contrib)
    se = float(ic.std(ddof=1) / math.sqrt(ds.n)) if ds.n > 1 else float("nan")
    point = 1.0 - psi
    return EstimateResult(f"S({horizon})", point, se, normal_ci(point, se), "targeted", ds.n,
                          diagnostics={"targeted": True, "epsilon": eps,
                                       "weight_max": float(np.nanmax(weights))})


def gcomp_with_targeting(ds: TrialDataset, regime: RegimeSpec, horizon: int | None = None,
                         history: HistorySpec | None = None, model: str = "logistic",
                         censor_model: str = "logistic", treatment_model: str = "empirical",
                         floor: float = 0.01) -> tuple[EstimateResult, EstimateResult]:
    """Untargeted and targeted estimates sharing one set of stage fits."""
    from .survival import cumulative_weights
    fit = gcomp_fit(ds, regime, horizon, history, model)
    w = cumulative_weights(ds, regime, fit.horizon, censor_model=censor_model,
                           treatment_model=treatment_model, floor=floor,
                           history=history if censor_model != "saturated" else None)
    point = 1.0 - fit.event_prob
    untargeted = EstimateResult(f"S({fit.horizon})", point, float("nan"), (float("nan"),) * 2,
                                f"seq_gcomp[{model}]", ds.n)
    return untargeted, targeted_update(fit, w)
