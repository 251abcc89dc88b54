"""Product-limit, inverse-probability-weighted and Aalen-Johansen estimators."""
from __future__ import annotations

import math
import warnings

import numpy as np

from ..data import CompetingDataset, TrialDataset, at_risk, event_month
from ..strategies import RegimeSpec
from .design import HistorySpec, alive_before, follows, independent_columns, uncensored_through, with_intercept
from .logistic import SeparationWarning, fit_logistic
from .results import EstimateResult, IdentifiabilityError, SurvivalCurve, normal_ci


class TruncationWarning(RuntimeWarning):
    pass


def _arm_view(ds: TrialDataset, arm):
    if arm is None:
        return ds
    rows = np.flatnonzero(ds.arm == arm)
    if not len(rows):
        raise ValueError(f"no subjects in arm {arm!r}")
    return ds.take(rows)


def kaplan_meier(ds: TrialDataset, arm=None) -> SurvivalCurve:
    """Discrete product-limit curve with Greenwood standard errors."""
    ds = _arm_view(ds, arm)
    if ds.n == 0:
        raise ValueError("empty dataset")
    K = ds.K
    n_risk = np.zeros(K, dtype=int)
    n_event = np.zeros(K, dtype=int)
    for t in range(1, K + 1):
        r = at_risk(ds, t)
        n_risk[t - 1] = r.sum()
        n_event[t - 1] = (ds.Y[r, t - 1] == 1).sum()
    S = np.ones(K)
    var_sum = np.zeros(K)
    s, g = 1.0, 0.0
    for k in range(K):
        n, d = n_risk[k], n_event[k]
        if n > 0:
            s *= 1.0 - d / n
            g += d / (n * (n - d)) if n > d else 0.0
        S[k] = s
        var_sum[k] = g
    se = S * np.sqrt(var_sum)
    return SurvivalCurve(np.arange(1, K + 1), S, se, n_risk, n_event)


def km_estimate(ds: TrialDataset, arm=None, horizon: int | None = None) -> EstimateResult:
    curve = kaplan_meier(ds, arm)
    t = ds.K if horizon is None else horizon
    p, se = curve.at(t), float(curve.se[t - 1])
    return EstimateResult(f"S({t})", p, se, normal_ci(p, se), "kaplan_meier",
                          int(curve.n_risk[0]), diagnostics={"curve": curve.table()})


def _node_probability(ds, t, risk, target, model, hist: HistorySpec, label):
    """P(node outcome == 1 | history) among ``risk`` for follow-up ``t``.

    ``target`` is a boolean array over all subjects (True = stays on course).
    """
    p = np.ones(ds.n)
    if not risk.any():
        return p
    y = target[risk].astype(float)
    if y.all():
        return p
    if model == "saturated" or not y.any():
        p[risk] = y.mean()
        return p
    if model != "logistic":
        raise ValueError(f"unknown {label} model {model!r}")
    X = with_intercept(hist.features(ds, t, risk))
    keep = independent_columns(X)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        fit = fit_logistic(X[:, keep], y)
    p[risk] = fit.predict(X[:, keep])
    return p


def node_probabilities(ds: TrialDataset, regime: RegimeSpec, horizon: int,
                       censor_model: str = "saturated", treatment_model: str = "empirical",
                       floor: float = 0.01, history: HistorySpec | None = None):
    """Per-node probabilities of staying on the regime and uncensored.

    Returns two ``(n, horizon)`` arrays, for the treatment node A(t-1) and the
    censoring node C(t-1) preceding Y(t).  Entries for subjects not at risk at
    a node are 1.  Probabilities are floored at ``floor``.
    """
    abar = regime.abar
    if len(abar) < horizon:
        raise ValueError("regime shorter than horizon")
    hist = history or HistorySpec(l_history="last")
    pa = np.ones((ds.n, horizon))
    pc = np.ones((ds.n, horizon))
    for t in range(1, horizon + 1):
        base = alive_before(ds, t) & uncensored_through(ds, t - 2) & follows(ds, abar, t - 1)
        on = ds.A[:, t - 1] == abar[t - 1]
        tm = "saturated" if treatment_model == "empirical" else treatment_model
        pa[:, t - 1] = _node_probability(ds, t, base, on, tm, hist, "treatment")
        risk_c = base & on
        stay = ds.C[:, t - 1] == 0
        pc[:, t - 1] = _node_probability(ds, t, risk_c, stay, censor_model, hist, "censoring")
    clipped = int((pc < floor).sum() + (pa < floor).sum())
    if clipped:
        warnings.warn(f"{clipped} node probabilities below {floor} truncated", TruncationWarning, stacklevel=2)
    return np.maximum(pa, floor), np.maximum(pc, floor)


def cumulative_weights(ds: TrialDataset, regime: RegimeSpec, horizon: int, **kw) -> np.ndarray:
    """``(n, horizon)`` inverse cumulative probabilities through A(t-1), C(t-1)."""
    pa, pc = node_probabilities(ds, regime, horizon, **kw)
    return 1.0 / np.cumprod(pa * pc, axis=1)


def ipcw_survival(ds: TrialDataset, regime: RegimeSpec, horizon: int | None = None,
                  censor_model: str = "saturated", treatment_model: str = "empirical",
                  floor: float = 0.01, history: HistorySpec | None = None,
                  return_weights: bool = False):
    """Weighted mean of survival past ``horizon`` among observed regime followers.

    Each subject counts up to its event or the horizon, whichever comes first,
    provided it followed the regime and stayed uncensored that long.  With a
    saturated per-time censoring model this reproduces Kaplan-Meier exactly.
    """
    t_star = ds.K if horizon is None else horizon
    W = cumulative_weights(ds, regime, t_star, censor_model=censor_model,
                           treatment_model=treatment_model, floor=floor, history=history)
    ev = event_month(ds.Y)
    if isinstance(ds, CompetingDataset):
        ev = np.minimum(ev, event_month(ds.Y_ce))
    _check_positivity(ds, regime, ev, t_star)
    stop = np.minimum(ev, t_star)
    rows = np.arange(ds.n)
    A_ok = np.array([follows_row(ds.A[i], regime.abar, s) for i, s in zip(rows, stop)])
    seen = A_ok & (ds.C[rows, stop - 1] == 0)
    w = np.where(seen, W[rows, stop - 1], 0.0)
    if w.sum() == 0:
        raise IdentifiabilityError("no uncensored regime followers")
    surv = (ev > t_star).astype(float)
    point = float(np.sum(w * surv) / w.sum())
    wn = w / w.sum()
    se = float(np.sqrt(np.sum(wn ** 2 * (surv - point) ** 2)))
    used = w[seen]
    res = EstimateResult(f"S({t_star})", point, se, normal_ci(point, se), "ipcw", int(seen.sum()),
                         diagnostics={"censor_model": censor_model, "weight_min": float(used.min()),
                                      "weight_max": float(used.max()), "floor": floor})
    return (res, w) if return_weights else res


def _check_positivity(ds: TrialDataset, regime: RegimeSpec, ev: np.ndarray, t_star: int) -> None:
    """Raise when everyone still at risk on the regime leaves it or is censored at some stage."""
    abar = np.asarray(regime.abar[:t_star], dtype=float)
    on = np.cumprod(ds.A[:, :t_star] == abar, axis=1).astype(bool)
    for s in range(1, t_star + 1):
        entering = ev >= s
        if s > 1:
            entering &= on[:, s - 2] & (ds.C[:, s - 2] == 0)
        staying = entering & on[:, s - 1] & (ds.C[:, s - 1] == 0)
        if entering.any() and not staying.any():
            raise IdentifiabilityError(f"stage t={s}: no subject at risk stays uncensored on the regime")


def follows_row(a_row, abar, through) -> bool:
    return bool(np.all(a_row[:through] == np.asarray(abar[:through], dtype=float)))


def aalen_johansen(cds: CompetingDataset, arm=None):
    """Cumulative incidence curves for both causes plus overall survival.

    Returns a dict with ``times``, ``cif_pe``, ``cif_ce``, ``survival``,
    ``se_pe``, ``se_ce`` and ``n_risk`` arrays.
    """
    if not isinstance(cds, CompetingDataset):
        raise TypeError("aalen_johansen needs a CompetingDataset")
    cds = _arm_view(cds, arm)
    K = cds.K
    n = np.zeros(K)
    d1 = np.zeros(K)
    d2 = np.zeros(K)
    for t in range(1, K + 1):
        r = at_risk(cds, t)
        n[t - 1] = r.sum()
        d1[t - 1] = (cds.Y[r, t - 1] == 1).sum()
        d2[t - 1] = (cds.Y_ce[r, t - 1] == 1).sum()
    if (n == 0).any():
        warnings.warn("empty risk set; cumulative incidence held flat from there", RuntimeWarning,
                      stacklevel=2)
    safe = np.where(n > 0, n, 1.0)
    h1 = np.where(n > 0, d1 / safe, 0.0)
    h2 = np.where(n > 0, d2 / safe, 0.0)
    S = np.cumprod(1.0 - h1 - h2)
    S_prev = np.r_[1.0, S[:-1]]
    F2 = np.cumsum(S_prev * h2)
    # the cause-specific increments sum to 1 - S; taking the complement keeps
    # the single-cause case identical to the product-limit curve
    F1 = 1.0 - S - F2
    return {
        "times": np.arange(1, K + 1), "cif_pe": F1, "cif_ce": F2, "survival": S,
        "se_pe": _aj_se(F1, S_prev, n, d1 + d2, d1), "se_ce": _aj_se(F2, S_prev, n, d1 + d2, d2),
        "n_risk": n.astype(int),
    }


def _aj_se(F, S_prev, n, d, dk):
    """Delta-method standard error of a cumulative incidence curve."""
    K = len(F)
    out = np.zeros(K)
    ok = n > 0
    for k in range(K):
        v = 0.0
        for u in range(k + 1):
            if not ok[u]:
                continue
            diff = F[k] - F[u]
            if n[u] > d[u]:
                v += diff ** 2 * d[u] / (n[u] * (n[u] - d[u]))
            v += S_prev[u] ** 2 * dk[u] * (n[u] - dk[u]) / n[u] ** 3
            v -= 2.0 * diff * S_prev[u] * dk[u] / n[u] ** 2
        out[k] = math.sqrt(max(v, 0.0))
    return out


def aalen_johansen_cif(cds: CompetingDataset, arm=None, horizon: int | None = None) -> dict:
    """CIF of each cause at ``horizon`` as :class:`EstimateResult` objects keyed ``PE``/``CE``."""
    cur = aalen_johansen(cds, arm)
    t = cds.K if horizon is None else horizon
    out = {}
    for cause, key in (("PE", "pe"), ("CE", "ce")):
        p = float(cur[f"cif_{key}"][t - 1])
        se = float(cur[f"se_{key}"][t - 1])
        out[cause] = EstimateResult(f"CIF_{cause}({t})", min(p, 1.0), se, normal_ci(p, se),
                                    "aalen_johansen", int(cur["n_risk"][0]))
    return out
