"""Forward enumeration of the g-formula over discrete histories.

Used as an independent check on the backward sequential-regression
estimator: hazards and covariate distributions are tabulated directly from
counts and combined by summing over every reachable history.
"""
from __future__ import annotations

from collections import Counter

import numpy as np


class Unidentified(Exception):
    pass


def _key(v) -> tuple:
    return tuple(float(x) for x in np.atleast_1d(v))


def gformula_event_probability(ds, abar, K: int) -> float:
    """P(event by K) under the static regime ``abar`` with empirical conditionals."""
    n = ds.n
    W = [_key(ds.W[i]) for i in range(n)]
    q = ds.L.shape[2]

    def L_at(i, t):
        return _key(ds.L[i, t - 1]) if q else ()

    def fit_rows(t, w, lhist):
        out = []
        for i in range(n):
            if W[i] != w:
                continue
            if t > 1 and ds.Y[i, t - 2] != 0:
                continue
            if ds.C[i, t - 1] != 0:
                continue
            if any(ds.A[i, s] != abar[s] for s in range(t)):
                continue
            if any(L_at(i, s) != lhist[s - 1] for s in range(1, t)):
                continue
            out.append(i)
        return out

    def G(t, w, lhist):
        rows = fit_rows(t, w, lhist)
        if not rows:
            raise Unidentified(t)
        events = sum(ds.Y[i, t - 1] == 1 for i in rows)
        h = events / len(rows)
        if t == K or events == len(rows):
            return h
        survivors = [i for i in rows if ds.Y[i, t - 1] == 0]
        counts = Counter(L_at(i, t) for i in survivors)
        rest = sum(c / len(survivors) * G(t + 1, w, lhist + (l,)) for l, c in counts.items())
        return h + (1 - h) * rest

    counts = Counter(W)
    return sum(c / n * G(1, w, ()) for w, c in counts.items())
