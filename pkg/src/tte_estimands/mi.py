"""Multiple imputation of censored outcomes under CAR, copy-reference and jump-to-reference.

Each imputation runs four steps: build a tentative dataset for the chosen
assumption, fill its NA cells forward in time from sequential discrete-hazard
models, carry events forward, and map the result back onto the original
subjects.  Completed datasets are analysed separately and pooled with
Rubin's rules.

Randomness is split per imputation ``j``: coefficient draws use the stream
``(seed, j, assumption)`` and cell draws use ``(seed, j, 99)``, indexed by
the subject's row in the original dataset.  The same subject therefore gets
the same uniforms whichever assumption imputes it.
"""
from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import CompetingDataset, TrialDataset, validate_dataset
from .estimation.design import HistorySpec, independent_columns, with_intercept
from .estimation.logistic import SeparationWarning, SingularDesignError, fit_logistic
from .estimation.results import EstimateResult

_CELL_STREAM = 99


class Assumption(str, enum.Enum):
    CAR = "CAR"
    CR = "CR"
    J2R = "J2R"

    @property
    def code(self) -> int:
        return ("CAR", "CR", "J2R").index(self.value)


class DegenerateModelWarning(RuntimeWarning):
    pass


class PoolingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MiSpec:
    assumption: Assumption | str = Assumption.CAR
    m: int = 20
    seed: int = 0
    reference_arm: float | None = None
    estimator: str = ""
    history: HistorySpec = field(default_factory=HistorySpec)
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "assumption", Assumption(self.assumption))
        if self.m < 2:
            raise ValueError("m must be at least 2")
        if self.assumption is not Assumption.CAR and self.reference_arm is None:
            raise ValueError(f"{self.assumption.value} needs a reference_arm")


@dataclass(frozen=True)
class TentativeDataset:
    """Step-1 dataset plus what is needed to undo it.

    ``kept_rows`` maps each tentative row to its row in ``source``;
    ``deleted_rows`` are the removed complete cases.  ``original_A`` holds
    the treatment rows before recoding.  ``blanked`` marks tentative rows
    whose follow-up was wiped (jump to reference).
    """

    dataset: TrialDataset
    source: TrialDataset
    assumption: Assumption
    kept_rows: np.ndarray
    deleted_rows: np.ndarray
    original_A: np.ndarray
    blanked: np.ndarray


def _never_censored(ds: TrialDataset) -> np.ndarray:
    return (ds.C == 0).all(axis=1)


def make_tentative_car(ds: TrialDataset) -> TentativeDataset:
    rows = np.arange(ds.n)
    return TentativeDataset(ds, ds, Assumption.CAR, rows, np.array([], dtype=int), ds.A.copy(),
                            np.zeros(ds.n, dtype=bool))


def _check_arms(ds: TrialDataset, reference_arm):
    arms = np.unique(ds.arm[~np.isnan(ds.arm)])
    if len(arms) < 2:
        raise ValueError("reference-based imputation needs two arms")
    if reference_arm not in arms:
        raise ValueError(f"reference arm {reference_arm!r} not present")


def make_tentative_cr(ds: TrialDataset, reference_arm) -> TentativeDataset:
    """Drop complete non-reference subjects and recode the rest to the reference arm."""
    _check_arms(ds, reference_arm)
    other = ds.arm != reference_arm
    drop = other & _never_censored(ds)
    kept = np.flatnonzero(~drop)
    sub = ds.take(kept)
    A = sub.A.copy()
    recode = other[kept]
    A[recode] = np.where(np.isnan(A[recode]), np.nan, float(reference_arm))
    tent = sub.replace(A=A)
    return TentativeDataset(tent, ds, Assumption.CR, kept, np.flatnonzero(drop), sub.A.copy(),
                            np.zeros(len(kept), dtype=bool))


def make_tentative_j2r(ds: TrialDataset, reference_arm) -> TentativeDataset:
    """As copy-reference, and censor every retained non-reference subject from baseline."""
    cr = make_tentative_cr(ds, reference_arm)
    tent = cr.dataset
    blank = ds.arm[cr.kept_rows] != reference_arm
    Y, L, C = tent.Y.copy(), tent.L.copy(), tent.C.copy()
    Y[blank] = np.nan
    L[blank] = np.nan
    C[blank] = 1
    return TentativeDataset(tent.replace(Y=Y, L=L, C=C), ds, Assumption.J2R, cr.kept_rows,
                            cr.deleted_rows, cr.original_A, blank)


def make_tentative(ds: TrialDataset, assumption, reference_arm=None) -> TentativeDataset:
    assumption = Assumption(assumption)
    if assumption is Assumption.CAR:
        return make_tentative_car(ds)
    if assumption is Assumption.CR:
        return make_tentative_cr(ds, reference_arm)
    return make_tentative_j2r(ds, reference_arm)


def monotone_adjust(ds: TrialDataset) -> TrialDataset:
    """Carry the first event forward; requires an outcome matrix without NA."""
    if np.isnan(ds.Y).any():
        raise ValueError("monotone_adjust needs a dataset without NA outcomes")
    Y = np.maximum.accumulate(ds.Y, axis=1)
    if np.array_equal(Y, ds.Y):
        return ds
    return ds.replace(Y=Y)


# -- imputation models -------------------------------------------------------

@dataclass(frozen=True)
class HazardModel:
    """P(Y(t) = 1 | at risk, history) on the logit scale, or a fixed rate."""

    t: int
    columns: np.ndarray | None
    coefficients: np.ndarray | None
    cov: np.ndarray | None
    rate: float | None = None
    degenerate: bool = False

    def draw(self, rng: np.random.Generator) -> "HazardModel":
        if self.coefficients is None or self.cov is None:
            return self
        beta = rng.multivariate_normal(self.coefficients, self.cov, method="eigh")
        return HazardModel(self.t, self.columns, beta, None, self.rate, self.degenerate)

    def probability(self, F: np.ndarray) -> np.ndarray:
        if self.coefficients is None:
            return np.full(len(F), self.rate)
        X = with_intercept(F)[:, self.columns]
        return 1.0 / (1.0 + np.exp(-(X @ self.coefficients)))


@dataclass(frozen=True)
class CovariateModel:
    """Normal linear model for one time-varying covariate at follow-up t."""

    t: int
    j: int
    columns: np.ndarray | None
    coefficients: np.ndarray
    xtx_inv: np.ndarray | None
    sigma: float
    dof: int

    def draw(self, rng: np.random.Generator) -> "CovariateModel":
        if self.xtx_inv is None or self.dof <= 0:
            return self
        sigma = self.sigma * math.sqrt(self.dof / rng.chisquare(self.dof))
        beta = rng.multivariate_normal(self.coefficients, sigma ** 2 * self.xtx_inv, method="eigh")
        return CovariateModel(self.t, self.j, self.columns, beta, None, sigma, self.dof)

    def mean(self, F: np.ndarray) -> np.ndarray:
        if self.columns is None:
            return np.full(len(F), self.coefficients[0])
        return with_intercept(F)[:, self.columns] @ self.coefficients


@dataclass(frozen=True)
class ImputationModels:
    hazards: tuple
    covariates: tuple
    history: HistorySpec

    def draw(self, rng: np.random.Generator) -> "ImputationModels":
        return ImputationModels(tuple(h.draw(rng) for h in self.hazards),
                                tuple(c.draw(rng) for c in self.covariates), self.history)

    @property
    def degenerate(self) -> list[int]:
        return [h.t for h in self.hazards if h.degenerate]


def _design(W, A0, L, t, rows, ds, hist: HistorySpec) -> np.ndarray:
    F = hist.from_arrays(W, L, t, rows, ds.covariate_names, ds.time_covariate_names)
    return np.hstack([A0[rows][:, None], F])


def _fit_hazard(t, F, y) -> HazardModel:
    if not len(y):
        return HazardModel(t, None, None, None, rate=float("nan"), degenerate=True)
    if y.min() == y.max():
        return HazardModel(t, None, None, None, rate=float(y[0]), degenerate=True)
    X = with_intercept(F)
    keep = independent_columns(X)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SeparationWarning)
            fit = fit_logistic(X[:, keep], y)
    except SingularDesignError:
        fit = None
    if fit is None or not fit.converged:
        warnings.warn(f"hazard model at t={t} did not converge; using the empirical rate",
                      DegenerateModelWarning, stacklevel=3)
        return HazardModel(t, None, None, None, rate=float(y.mean()), degenerate=True)
    return HazardModel(t, keep, fit.coefficients, fit.cov)


def _fit_covariate(t, j, F, z) -> CovariateModel:
    if len(z) < 2:
        mu = float(z.mean()) if len(z) else 0.0
        return CovariateModel(t, j, None, np.array([mu]), None, 0.0, 0)
    X = with_intercept(F)
    keep = independent_columns(X)
    X = X[:, keep]
    beta, *_ = np.linalg.lstsq(X, z, rcond=None)
    dof = len(z) - X.shape[1]
    resid = z - X @ beta
    sigma = float(np.sqrt(resid @ resid / dof)) if dof > 0 else 0.0
    xtx_inv = np.linalg.pinv(X.T @ X)
    return CovariateModel(t, j, keep, beta, xtx_inv, sigma, dof)


def fit_imputation_models(ds: TrialDataset, history: HistorySpec | None = None) -> ImputationModels:
    """Sequential discrete-hazard models for Y(t) and linear models for L(t).

    The hazard model at ``t`` is fit on subjects with Y(t) observed and no
    event before ``t``, on the arm code, baseline covariates and earlier
    time-varying covariates.  A follow-up whose observed outcomes are all
    equal, or whose fit fails, falls back to the empirical rate.
    """
    if isinstance(ds, CompetingDataset):
        raise TypeError("imputation of competing-risk data is not supported")
    hist = history or HistorySpec()
    K = ds.K
    A0 = ds.arm
    hazards, covs = [], []
    prev_alive = np.ones(ds.n, dtype=bool)
    for t in range(1, K + 1):
        rows = np.flatnonzero(prev_alive & ~np.isnan(ds.Y[:, t - 1]))
        F = _design(ds.W, A0, ds.L, t, rows, ds, hist)
        hazards.append(_fit_hazard(t, F, ds.Y[rows, t - 1]))
        prev_alive = ds.Y[:, t - 1] == 0
        if t < K:
            for j in range(ds.L.shape[2]):
                obs = np.flatnonzero(~np.isnan(ds.L[:, t - 1, j]))
                covs.append(_fit_covariate(t, j, _design(ds.W, A0, ds.L, t, obs, ds, hist),
                                           ds.L[obs, t - 1, j]))
    empty = [h.t for h in hazards if h.degenerate and math.isnan(h.rate)]
    if empty:
        # pooled discrete hazard over all observed at-risk cells
        at_risk = ~np.isnan(ds.Y) & (np.r_['1', np.zeros((ds.n, 1)), ds.Y[:, :-1]] == 0)
        rate = float(ds.Y[at_risk].mean()) if at_risk.any() else 0.0
        hazards = [HazardModel(h.t, None, None, None, rate=rate, degenerate=True)
                   if h.t in empty else h for h in hazards]
        warnings.warn(f"no observed outcomes at t={empty}; using the pooled hazard",
                      DegenerateModelWarning, stacklevel=2)
    return ImputationModels(tuple(hazards), tuple(covs), hist)


def _cell_draws(seed, j, n, K, q):
    rng = np.random.default_rng([int(seed), int(j), _CELL_STREAM])
    return rng.uniform(size=(n, K)), rng.standard_normal((n, max(K - 1, 0), q))


def _impute_arrays(ds: TrialDataset, models: ImputationModels, U, Z, held=None):
    """Fill NA outcome and covariate cells forward in time; ``U``/``Z`` align with ds rows.

    ``held`` optionally supplies outcome values (NaN elsewhere) that replace
    draws as the pass reaches them, so later draws condition on them.
    """
    Y, L = ds.Y.copy(), ds.L.copy()
    if held is not None:
        Y = np.where(np.isnan(held), Y, np.nan)
    A0 = ds.arm
    q = L.shape[2]
    cov_by_t = {(c.t, c.j): c for c in models.covariates}
    for t in range(1, ds.K + 1):
        miss = np.isnan(Y[:, t - 1])
        if miss.any():
            prior = Y[:, t - 2] if t >= 2 else np.zeros(ds.n)
            carried = miss & (prior == 1)
            Y[carried, t - 1] = 1.0
            draw = np.flatnonzero(miss & ~carried)
            if len(draw):
                F = _design(ds.W, A0, L, t, draw, ds, models.history)
                p = models.hazards[t - 1].probability(F)
                Y[draw, t - 1] = (U[draw, t - 1] < p).astype(float)
            if held is not None:
                h = held[:, t - 1]
                Y[:, t - 1] = np.where(np.isnan(h), Y[:, t - 1], h)
        if t < ds.K:
            for j in range(q):
                lm = np.flatnonzero(np.isnan(L[:, t - 1, j]))
                if len(lm):
                    mdl = cov_by_t[(t, j)]
                    F = _design(ds.W, A0, L, t, lm, ds, models.history)
                    L[lm, t - 1, j] = mdl.mean(F) + mdl.sigma * Z[lm, t - 1, j]
    return Y, L


def impute_car(ds: TrialDataset, models: ImputationModels, seed: int, j: int = 0,
               draw_parameters: bool = True) -> TrialDataset:
    """One completed dataset under censoring at random.

    ``seed`` and ``j`` select the random streams; ``draw_parameters=False``
    imputes from the point estimates.
    """
    if draw_parameters:
        models = models.draw(np.random.default_rng([int(seed), int(j), Assumption.CAR.code]))
    U, Z = _cell_draws(seed, j, ds.n, ds.K, ds.L.shape[2])
    Y, L = _impute_arrays(ds, models, U, Z)
    return monotone_adjust(_completed(ds, ds.A, Y, L))


def _completed(ds, A, Y, L) -> TrialDataset:
    return ds.replace(A=A, Y=Y, L=L, C=np.zeros_like(ds.C), censor_kind=np.full(ds.n, "", dtype=object))


def restore_original(tent: TentativeDataset, imputed: TrialDataset) -> TrialDataset:
    """Undo step 1 on a completed tentative dataset.

    Treatment codes are restored, deleted complete cases reinserted, and for
    blanked subjects every originally observed cell replaces its imputation.
    Events are carried forward again afterwards.
    """
    src = tent.source
    if imputed.n != len(tent.kept_rows):
        raise ValueError("imputed dataset does not match the tentative layout")
    Y, L = src.Y.copy(), src.L.copy()
    k = tent.kept_rows
    Yk, Lk = imputed.Y.copy(), imputed.L.copy()
    b = tent.blanked
    if b.any():
        oy = src.Y[k[b]]
        Yk[b] = np.where(np.isnan(oy), Yk[b], oy)
        ol = src.L[k[b]]
        Lk[b] = np.where(np.isnan(ol), Lk[b], ol)
    Y[k], L[k] = Yk, Lk
    A = src.A.copy()
    A[k] = tent.original_A
    out = _completed(src, A, Y, L)
    out = monotone_adjust(out)
    return out


# -- pooling -----------------------------------------------------------------

@dataclass(frozen=True)
class PooledEstimate:
    point: float
    within_var: float
    between_var: float
    total_var: float
    df: float
    ci95: tuple
    m: int
    n_failed: int = 0
    estimates: tuple = ()
    variances: tuple = ()

    @property
    def se(self) -> float:
        return math.sqrt(self.total_var)

    def to_dict(self) -> dict:
        fin = lambda v: v if math.isfinite(v) else None  # noqa: E731
        return {"point": self.point, "se": self.se, "within_var": self.within_var,
                "between_var": self.between_var, "total_var": self.total_var, "df": fin(self.df),
                "ci95": list(self.ci95), "m": self.m, "n_failed": self.n_failed,
                "per_imputation": [{"point": p, "variance": v} for p, v in zip(self.estimates, self.variances)]}


def rubin_pool(points, variances, n_failed: int = 0) -> PooledEstimate:
    """Rubin's rules; the degrees of freedom are infinite when the between variance is 0."""
    q = np.asarray(points, dtype=float)
    u = np.asarray(variances, dtype=float)
    if q.shape != u.shape or q.ndim != 1:
        raise ValueError("points and variances must be equal-length vectors")
    m = len(q)
    if m < 2:
        raise PoolingError("need at least two imputations to pool")
    if (u < 0).any() or np.isnan(u).any() or np.isnan(q).any():
        raise ValueError("variances must be nonnegative and finite")
    qbar = float(q.mean())
    wbar = float(u.mean())
    b = float(q.var(ddof=1))
    inflated = (1.0 + 1.0 / m) * b
    total = wbar + inflated
    df = math.inf if inflated == 0 else (m - 1) * (1.0 + wbar / inflated) ** 2
    crit = stats.norm.ppf(0.975) if math.isinf(df) else stats.t.ppf(0.975, df)
    half = crit * math.sqrt(total)
    return PooledEstimate(qbar, wbar, b, total, df, (qbar - half, qbar + half), m, n_failed,
                          tuple(q.tolist()), tuple(u.tolist()))


# -- drivers -----------------------------------------------------------------

class _AssumptionRun:
    """Tentative dataset and fitted models for one assumption, reused across imputations."""

    def __init__(self, ds, assumption, reference_arm, history):
        self.assumption = Assumption(assumption)
        self.tent = make_tentative(ds, self.assumption, reference_arm)
        self.models = fit_imputation_models(self.tent.dataset, history)

    def complete(self, seed, j, U, Z) -> TrialDataset:
        models = self.models.draw(np.random.default_rng([int(seed), int(j), self.assumption.code]))
        t = self.tent
        held = None
        if t.blanked.any():
            # observed outcomes of blanked subjects are fixed during the pass
            held = np.full(t.dataset.Y.shape, np.nan)
            held[t.blanked] = t.source.Y[t.kept_rows[t.blanked]]
        Y, L = _impute_arrays(t.dataset, models, U[t.kept_rows], Z[t.kept_rows], held)
        filled = monotone_adjust(_completed(t.dataset, t.dataset.A, Y, L))
        return restore_original(t, filled)


def _as_point_var(res) -> tuple[float, float]:
    if isinstance(res, EstimateResult):
        return res.point, res.se ** 2
    point, var = res
    return float(point), float(var)


def _pool_runs(ds, seed, m, runs_for_rows, estimator, n_jobs):
    """Shared loop: ``runs_for_rows`` maps an assumption run to the rows it fills."""
    q = ds.L.shape[2]

    def one(j):
        U, Z = _cell_draws(seed, j, ds.n, ds.K, q)
        Y, L = ds.Y.copy(), ds.L.copy()
        completed = None
        for run, rows in runs_for_rows:
            part = run.complete(seed, j, U, Z)
            if completed is None:
                completed = part
            Y[rows], L[rows] = part.Y[rows], part.L[rows]
        completed = monotone_adjust(completed.replace(Y=Y, L=L))
        try:
            return completed, _as_point_var(estimator(completed))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            return completed, None

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            out = list(pool.map(one, range(m)))
    else:
        out = [one(j) for j in range(m)]
    ok = [r for _, r in out if r is not None]
    failed = m - len(ok)
    if len(ok) < 2:
        raise PoolingError(f"only {len(ok)} of {m} imputations produced an estimate")
    pooled = rubin_pool([p for p, _ in ok], [v for _, v in ok], n_failed=failed)
    return pooled, [c for c, _ in out]


def run_mi(ds: TrialDataset, spec: MiSpec, estimator, return_datasets: bool = False):
    """Impute ``spec.m`` times under ``spec.assumption`` and pool ``estimator`` results.

    ``estimator`` maps a completed dataset to an :class:`EstimateResult` or a
    ``(point, variance)`` pair.  Imputations whose estimator raises are
    dropped and counted in ``n_failed``.
    """
    run = _AssumptionRun(ds, spec.assumption, spec.reference_arm, spec.history)
    pooled, completed = _pool_runs(ds, spec.seed, spec.m, [(run, np.arange(ds.n))], estimator, spec.n_jobs)
    return (pooled, completed) if return_datasets else pooled


def combined_mi(ds: TrialDataset, assumptions: dict, estimator, m: int = 20, seed: int = 0,
                reference_arm=None, history: HistorySpec | None = None, default: str = "CAR",
                n_jobs: int = 1, return_datasets: bool = False):
    """Impute each subject under the assumption assigned to its censoring kind.

    ``assumptions`` maps ICE kinds (as recorded in ``ds.censor_kind``) to
    ``"CAR"``, ``"CR"`` or ``"J2R"``; ordinary censoring uses ``default``.
    With a single assumption for every kind this reproduces :func:`run_mi`
    with the same seed.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    kinds = np.asarray(ds.censor_kind, dtype=object)
    unknown = sorted(set(kinds[ds.C.any(axis=1)]) - set(assumptions) - {""})
    if unknown:
        raise ValueError(f"no assumption given for censoring kinds {unknown}")
    # plain codes: numpy compares str-enum members in object arrays as unequal
    per_row = np.array([Assumption(assumptions.get(k, default) if k else default).code for k in kinds])
    hist = history or HistorySpec()
    runs = []
    for a in Assumption:
        rows = np.flatnonzero(per_row == a.code)
        if len(rows):
            runs.append((_AssumptionRun(ds, a, reference_arm, hist), rows))
    if not runs:
        runs.append((_AssumptionRun(ds, default, reference_arm, hist), np.arange(ds.n)))
    pooled, completed = _pool_runs(ds, seed, m, runs, estimator, n_jobs)
    return (pooled, completed) if return_datasets else pooled


def check_completed(ds: TrialDataset) -> None:
    """Raise if a completed dataset still has NA cells or breaks a convention."""
    if np.isnan(ds.Y).any() or np.isnan(ds.L).any():
        raise ValueError("completed dataset has NA cells")
    bad = validate_dataset(ds)
    if bad:
        raise ValueError(f"completed dataset fails validation: {bad[0]}")
