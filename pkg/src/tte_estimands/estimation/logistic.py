"""Weighted logistic regression by iteratively reweighted least squares.

Responses may be fractional in [0, 1]; the fit then maximises the Bernoulli
quasi-likelihood, which keeps predictions inside the unit interval.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

COEF_CAP = 30.0


class SingularDesignError(np.linalg.LinAlgError):
    pass


class SeparationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    gradient_norm: float
    cov: np.ndarray | None = None
    separated: bool = False

    def predict(self, X, offset=None) -> np.ndarray:
        eta = np.asarray(X, dtype=float) @ self.coefficients
        if offset is not None:
            eta = eta + offset
        return expit(eta)


def _loglik(eta, y, w):
    return float(np.sum(w * (y * log_expit(eta) + (1.0 - y) * log_expit(-eta))))


def fit_logistic(X, y, weights=None, offset=None, tol: float = 1e-10, max_iter: int = 100,
                 start=None) -> LogisticFit:
    """Maximise the weighted Bernoulli log-likelihood.

    Parameters
    ----------
    X : (n, p) array
        Design matrix; include an intercept column yourself.
    y : (n,) array
        Responses in [0, 1].
    weights : (n,) array, optional
        Nonnegative prior weights.
    offset : (n,) array, optional
        Fixed term added to the linear predictor.
    tol : float
        Convergence threshold on the Euclidean norm of the gradient of the
        weighted mean log-likelihood.

    Returns
    -------
    LogisticFit
        ``converged`` is True only when the gradient norm is within ``tol``.

    Raises
    ------
    SingularDesignError
        If the rows carrying positive weight do not have full column rank.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("y must have one entry per row of X")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or (w < 0).any():
        raise ValueError("weights must be a nonnegative vector matching X")
    if np.isnan(X).any() or np.isnan(y).any() or np.isnan(w).any():
        raise ValueError("NA cells in the design or response")
    if ((y < 0) | (y > 1)).any():
        raise ValueError("responses must lie in [0, 1]")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    keep = w > 0
    X, y, w, off = X[keep], y[keep], w[keep], off[keep]
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesignError(f"design of rank {np.linalg.matrix_rank(X)} < {p} columns")
    wsum = w.sum()
    beta = np.zeros(p) if start is None else np.array(start, dtype=float)
    eta = X @ beta + off
    ll = _loglik(eta, y, w)
    separated = False
    converged = False
    it = 0
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        grad = X.T @ (w * (y - mu))
        gnorm = float(np.linalg.norm(grad) / wsum)
        if gnorm <= tol:
            converged = True
            it -= 1
            break
        v = np.maximum(mu * (1.0 - mu), 1e-12)
        H = X.T @ (X * (w * v)[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # step halving keeps the log-likelihood monotone
        for _ in range(30):
            cand = beta + step
            eta_c = X @ cand + off
            ll_c = _loglik(eta_c, y, w)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            step = step / 2.0
        beta, eta, ll = cand, eta_c, ll_c
        if np.abs(beta).max() > COEF_CAP:
            separated = True
            break
    if separated:
        warnings.warn("complete or quasi-complete separation; coefficients capped", SeparationWarning,
                      stacklevel=2)
        beta = np.clip(beta, -COEF_CAP, COEF_CAP)
        eta = X @ beta + off
        ll = _loglik(eta, y, w)
        mu = expit(eta)
        gnorm = float(np.linalg.norm(X.T @ (w * (y - mu))) / wsum)
        converged = False
    mu = expit(eta)
    v = mu * (1.0 - mu)
    H = X.T @ (X * (w * v)[:, None])
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        cov = None
    return LogisticFit(beta, converged, it, ll, gnorm, cov, separated)
