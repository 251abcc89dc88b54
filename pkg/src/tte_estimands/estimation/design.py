"""History design matrices shared by the nuisance and outcome regressions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr

from ..data import TrialDataset


def follows(ds: TrialDataset, abar, through: int) -> np.ndarray:
    """Subjects whose A(0..through-1) equal the regime."""
    if through <= 0:
        return np.ones(ds.n, dtype=bool)
    target = np.asarray(abar[:through], dtype=float)[None, :]
    return (ds.A[:, :through] == target).all(axis=1)


def alive_before(ds: TrialDataset, t: int) -> np.ndarray:
    """No event by follow-up t-1 (always true for t = 1)."""
    if t <= 1:
        return np.ones(ds.n, dtype=bool)
    alive = ds.Y[:, t - 2] == 0
    y_ce = getattr(ds, "Y_ce", None)
    if y_ce is not None:
        alive &= y_ce[:, t - 2] == 0
    return alive


def uncensored_through(ds: TrialDataset, node: int) -> np.ndarray:
    """C(node) uncensored; ``node < 0`` means no censoring node yet."""
    if node < 0:
        return np.ones(ds.n, dtype=bool)
    return ds.C[:, node] == 0


def _select_names(names, wanted):
    if wanted is None:
        return list(range(len(names)))
    idx = []
    for w in wanted:
        if w not in names:
            raise KeyError(f"unknown covariate {w!r}")
        idx.append(names.index(w))
    return idx


@dataclass(frozen=True)
class HistorySpec:
    """Which baseline and time-varying covariates enter a node regression.

    ``l_history`` is ``"all"`` for L(1..t-1) or ``"last"`` for L(t-1) only.
    ``degree=2`` adds squares of non-binary columns and pairwise products.
    """

    baseline: tuple | None = None
    time_varying: tuple | None = None
    l_history: str = "all"
    degree: int = 1

    def features(self, ds: TrialDataset, t: int, rows=None) -> np.ndarray:
        """Raw history columns (no intercept) available before Y(t)."""
        return self.from_arrays(ds.W, ds.L, t, rows, ds.covariate_names, ds.time_covariate_names)

    def from_arrays(self, W, L, t: int, rows, covariate_names, time_covariate_names) -> np.ndarray:
        rows = slice(None) if rows is None else rows
        wi = _select_names(list(covariate_names), self.baseline)
        li = _select_names(list(time_covariate_names), self.time_varying)
        parts = [W[rows][:, wi]]
        if li and t >= 2:
            lags = range(1, t) if self.l_history == "all" else [t - 1]
            for s in lags:
                parts.append(L[rows, s - 1][:, li])
        X = np.hstack(parts)
        if self.degree >= 2 and X.shape[1]:
            X = expand_degree2(X)
        return X


def expand_degree2(X: np.ndarray) -> np.ndarray:
    cols = [X]
    p = X.shape[1]
    for j in range(p):
        xj = X[:, j]
        if not np.isin(xj, (0.0, 1.0)).all():
            cols.append((xj * xj)[:, None])
    for j in range(p):
        for k in range(j + 1, p):
            cols.append((X[:, j] * X[:, k])[:, None])
    return np.hstack(cols)


def independent_columns(X: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Column indices of a full-rank subset of ``X``; column 0 is the intercept and always kept."""
    if X.shape[1] <= 1 or X.shape[0] == 0:
        return np.arange(min(X.shape[1], 1))
    Z = X[:, 1:] - X[:, 1:].mean(axis=0)
    scale = np.abs(Z).max(axis=0)
    live = scale > tol
    if not live.any():
        return np.array([0])
    Z = Z[:, live] / scale[live]
    _, R, piv = qr(Z, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int((d > tol * max(d[0], 1.0)).sum())
    cols = np.flatnonzero(live)[np.sort(piv[:rank])] + 1
    return np.r_[0, cols]


def with_intercept(F: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((F.shape[0], 1)), F])
