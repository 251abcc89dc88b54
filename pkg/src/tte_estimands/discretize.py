"""Continuous event and censoring times to the discrete node structure.

Times are rounded up to whole follow-ups.  When the event and the censoring
land in the same follow-up, the event wins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import NA


@dataclass(frozen=True)
class EventTimes:
    tY: float
    tC: float
    tI: Optional[float] = None

    def __post_init__(self):
        for name in ("tY", "tC", "tI"):
            v = getattr(self, name)
            if v is None and name == "tI":
                continue
            if not v > 0:
                raise ValueError(f"{name} must be strictly positive, got {v!r}")


@dataclass(frozen=True)
class DiscretizedRow:
    T: int
    delta: int
    row: tuple
    ice_month: Optional[int] = None


def _check_K(K) -> int:
    K = getattr(K, "K", K)
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    return int(K)


def discretize_times(K, tY, tC):
    """Vectorised discretisation.

    Returns
    -------
    T : int array
        Observed follow-up, ``K + 1`` for subjects alive and uncensored at K.
    delta : int array
        1 for an observed event, 0 otherwise.
    rows : (n, K) float array
        Outcome rows with NaN after censoring.
    """
    K = _check_K(K)
    tY = np.atleast_1d(np.asarray(tY, dtype=float))
    tC = np.atleast_1d(np.asarray(tC, dtype=float))
    if (tY <= 0).any() or (tC <= 0).any() or np.isnan(tY).any() or np.isnan(tC).any():
        raise ValueError("event and censoring times must be strictly positive")
    dY = np.ceil(tY)
    dC = np.ceil(tC)
    event = (dY <= K) & (dY <= dC)
    cens = ~event & (dC <= K)
    T = np.where(event, dY, np.where(cens, dC, K + 1)).astype(int)
    delta = event.astype(int)
    cols = np.arange(1, K + 1)[None, :]
    rows = np.where(cols >= dY[:, None], 1.0, 0.0)
    rows = np.where(cens[:, None] & (cols >= T[:, None]), np.nan, rows)
    return T, delta, rows


def discretize_subject(K, times: EventTimes) -> DiscretizedRow:
    T, delta, rows = discretize_times(K, times.tY, times.tC)
    return DiscretizedRow(T=int(T[0]), delta=int(delta[0]), row=_row_tuple(rows[0]))


def ice_months(K, T, tI):
    """ICE follow-up ``ceil(tI)`` when it falls at or before ``min(T, K)``; 0 otherwise."""
    K = _check_K(K)
    tI = np.atleast_1d(np.asarray(tI, dtype=float))
    T = np.atleast_1d(np.asarray(T))
    finite = np.isfinite(tI)
    if (tI[finite] <= 0).any():
        raise ValueError("ICE times must be strictly positive")
    m = np.where(finite, np.ceil(np.where(finite, tI, 1.0)), np.inf)
    ok = m <= np.minimum(T, K)
    return np.where(ok, m, 0).astype(int)


def discretize_with_ice(K, times: EventTimes) -> DiscretizedRow:
    base = discretize_subject(K, times)
    ice = None
    if times.tI is not None:
        m = int(ice_months(K, base.T, times.tI)[0])
        ice = m or None
    return DiscretizedRow(T=base.T, delta=base.delta, row=base.row, ice_month=ice)


def _row_tuple(row) -> tuple:
    return tuple(NA if math.isnan(v) else int(v) for v in row)
