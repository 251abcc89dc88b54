"""Discrete-time longitudinal trial data.

The time order of the nodes for one subject is::

    W, A(0), C(0), Y(1), L(1), A(1), C(1), Y(2), ..., A(K-1), C(K-1), Y(K)

Arrays are stored subject-major with 0-based columns, so ``Y[:, t-1]`` holds
``Y(t)``, ``C[:, t-1]`` holds ``C(t-1)`` (the censoring node preceding
``Y(t)``), ``A[:, t]`` holds ``A(t)`` and ``L[:, t-1, :]`` holds ``L(t)``.

Missing outcomes and absent treatment are NaN in the array layer.  The
record-level view (:class:`SubjectRecord`) uses the :data:`NA` and
:data:`ABSENT` sentinels instead, which refuse arithmetic.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name

    def __bool__(self) -> bool:
        raise TypeError(f"{self._name} has no truth value")

    def __reduce__(self):
        return self._name


NA = _Sentinel("NA")
ABSENT = _Sentinel("ABSENT")


class Censoring(enum.IntEnum):
    UNCENSORED = 0
    CENSORED = 1


UNCENSORED = Censoring.UNCENSORED
CENSORED = Censoring.CENSORED


class ConventionConflictError(ValueError):
    """An event is recorded at a follow-up that is already censored."""

    def __init__(self, subject: str, index: int, message: str = ""):
        self.subject = subject
        self.index = index
        super().__init__(message or f"subject {subject!r}: event recorded at censored follow-up {index}")


@dataclass(frozen=True)
class Timeline:
    K: int
    unit: str = "month"

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    W: tuple
    A: tuple
    C: tuple
    Y: tuple
    L: tuple = ()


@dataclass(frozen=True)
class Violation:
    subject: str
    index: int
    rule: str
    detail: str = ""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False, kw_only=True)
class TrialDataset:
    """Immutable collection of subject records sharing one timeline.

    ``censor_kind`` labels, per subject, the ICE kind whose strategy produced
    the censoring (empty string for ordinary censoring).  ``notes`` carries
    metadata emitted by transformations.
    """

    ids: np.ndarray
    W: np.ndarray
    A: np.ndarray
    C: np.ndarray
    Y: np.ndarray
    L: np.ndarray | None = None
    covariate_names: tuple = ()
    time_covariate_names: tuple = ()
    treatment_labels: tuple = ()
    unit: str = "month"
    censor_kind: np.ndarray | None = None
    notes: tuple = ()

    def __post_init__(self):
        ids = np.array([str(i) for i in self.ids], dtype=object)
        ids.setflags(write=False)
        n = len(ids)
        A = _frozen(self.A)
        if A.ndim != 2 or A.shape[0] != n:
            raise ValueError("A must be an (n, K) array")
        K = A.shape[1]
        Timeline(K)
        W = _frozen(np.reshape(self.W, (n, -1)) if n else np.zeros((0, len(self.covariate_names))))
        C = _frozen(self.C, dtype=np.int8)
        Y = _frozen(self.Y)
        if C.shape != (n, K) or Y.shape != (n, K):
            raise ValueError("A, C and Y must share shape (n, K)")
        if self.L is None:
            L = np.zeros((n, K - 1, len(self.time_covariate_names)))
        else:
            L = np.asarray(self.L, dtype=float)
        if L.shape[:2] != (n, K - 1):
            raise ValueError("L must be an (n, K-1, q) array")
        L = _frozen(L)
        cov_names = tuple(self.covariate_names) or tuple(f"W{j + 1}" for j in range(W.shape[1]))
        if len(cov_names) != W.shape[1]:
            raise ValueError("covariate_names does not match W")
        tnames = tuple(self.time_covariate_names) or tuple(f"L{j + 1}" for j in range(L.shape[2]))
        if len(tnames) != L.shape[2]:
            raise ValueError("time_covariate_names does not match L")
        kinds = self.censor_kind
        kinds = np.full(n, "", dtype=object) if kinds is None else np.array(kinds, dtype=object)
        kinds.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "ids", ids)
        set_(self, "A", A)
        set_(self, "W", W)
        set_(self, "C", C)
        set_(self, "Y", Y)
        set_(self, "L", L)
        set_(self, "covariate_names", cov_names)
        set_(self, "time_covariate_names", tnames)
        set_(self, "treatment_labels", tuple(tuple(p) for p in self.treatment_labels))
        set_(self, "censor_kind", kinds)
        set_(self, "notes", tuple(self.notes))

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def K(self) -> int:
        return self.A.shape[1]

    @property
    def timeline(self) -> Timeline:
        return Timeline(self.K, self.unit)

    @property
    def arm(self) -> np.ndarray:
        """Initially assigned treatment code A(0)."""
        return self.A[:, 0]

    def replace(self, **changes) -> "TrialDataset":
        return dataclasses.replace(self, **changes)

    def take(self, rows, relabel: bool = False) -> "TrialDataset":
        rows = np.asarray(rows)
        ids = self.ids[rows]
        if relabel:
            ids = np.array([f"{i}~{j}" for j, i in enumerate(ids)], dtype=object)
        return self.replace(ids=ids, W=self.W[rows], A=self.A[rows], C=self.C[rows],
                            Y=self.Y[rows], L=self.L[rows], censor_kind=self.censor_kind[rows],
                            **self._extra_take(rows))

    def _extra_take(self, rows) -> dict:
        return {}

    def index_of(self, subject_id: str) -> int:
        hits = np.flatnonzero(self.ids == str(subject_id))
        if not len(hits):
            raise KeyError(subject_id)
        return int(hits[0])

    def record(self, i: int) -> SubjectRecord:
        return SubjectRecord(
            id=self.ids[i],
            W=tuple(float(v) for v in self.W[i]),
            A=tuple(ABSENT if np.isnan(a) else int(a) for a in self.A[i]),
            C=tuple(Censoring(int(c)) for c in self.C[i]),
            Y=tuple(NA if np.isnan(y) else int(y) for y in self.Y[i]),
            L=tuple(NA if np.isnan(l).all() else tuple(float(v) for v in l) for l in self.L[i]),
        )

    def records(self) -> list[SubjectRecord]:
        return [self.record(i) for i in range(self.n)]

    @classmethod
    def from_records(cls, records: Iterable[SubjectRecord], **meta) -> "TrialDataset":
        records = list(records)
        if not records:
            raise ValueError("no records")
        K = len(records[0].A)

        def num(v):
            return np.nan if v is NA or v is ABSENT or v is None else float(v)

        q = 0
        for r in records:
            for l in r.L:
                if l is not NA and l is not None:
                    q = len(l)
                    break
            if q:
                break
        L = np.full((len(records), K - 1, q), np.nan)
        for i, r in enumerate(records):
            for t, l in enumerate(r.L):
                if l is not NA and l is not None:
                    L[i, t] = l
        return cls(
            ids=[r.id for r in records],
            W=np.array([list(r.W) for r in records], dtype=float).reshape(len(records), -1),
            A=[[num(a) for a in r.A] for r in records],
            C=[[int(c) for c in r.C] for r in records],
            Y=[[num(y) for y in r.Y] for r in records],
            L=L,
            **meta,
        )

    def fingerprint(self) -> tuple:
        """Content tuple used for exact equality checks."""
        parts = [tuple(self.ids), self.covariate_names, self.time_covariate_names,
                 self.treatment_labels, tuple(self.censor_kind)]
        for a in self._arrays():
            parts.append((a.shape, np.ascontiguousarray(a).tobytes()))
        return tuple(parts)

    def _arrays(self):
        return (self.W, self.A, self.C, self.Y, self.L)

    def equals(self, other: "TrialDataset") -> bool:
        return type(self) is type(other) and self.fingerprint() == other.fingerprint()


@dataclass(frozen=True, eq=False, kw_only=True)
class CompetingDataset(TrialDataset):
    """Two-dimensional outcome: ``Y`` is the primary event, ``Y_ce`` the competing one."""

    Y_ce: np.ndarray

    def __post_init__(self):
        super().__post_init__()
        y_ce = _frozen(self.Y_ce)
        if y_ce.shape != self.Y.shape:
            raise ValueError("Y_ce must match Y")
        object.__setattr__(self, "Y_ce", y_ce)

    @property
    def Y_pe(self) -> np.ndarray:
        return self.Y

    def _extra_take(self, rows) -> dict:
        return {"Y_ce": self.Y_ce[rows]}

    def _arrays(self):
        return super()._arrays() + (self.Y_ce,)


def _first_index(mask: np.ndarray) -> np.ndarray:
    """Column of the first True per row, or ``mask.shape[1]`` when none."""
    K = mask.shape[1]
    return np.where(mask.any(axis=1), mask.argmax(axis=1), K)


def apply_conventions(raw) -> TrialDataset:
    """Enforce the outcome and censoring conventions.

    The outcome is carried forward after the first event.  Censoring is
    absorbing, and a missing outcome at an otherwise uncensored follow-up is
    read as censoring from that follow-up on.  At and after the first censored
    follow-up ``Y`` and ``L`` become missing.  Censoring recorded after an
    observed event is dropped, since the subject has left the risk set.

    Raises
    ------
    ConventionConflictError
        If an event is recorded at or after the first censored follow-up.
    """
    if not isinstance(raw, TrialDataset):
        raw = TrialDataset.from_records(raw)
    if isinstance(raw, CompetingDataset):
        return _competing_conventions(raw)
    Y = raw.Y
    _check_codes(raw)
    c0 = np.minimum(_first_index(raw.C == 1), _first_index(np.isnan(Y)))
    p0 = _first_index(Y == 1)
    _raise_on_conflict(raw.ids, p0, c0, raw.K)
    Y_new, C_new, L_new = _conform(p0, c0, raw.K, raw.L)
    return raw.replace(Y=Y_new, C=C_new, L=L_new)


def _check_codes(ds: TrialDataset):
    bad = ~(np.isnan(ds.Y) | (ds.Y == 0) | (ds.Y == 1))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"subject {ds.ids[i]!r}: outcome Y({j + 1}) = {ds.Y[i, j]!r} is not 0, 1 or NA")
    bad = ~np.isin(ds.C, (0, 1))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"subject {ds.ids[i]!r}: censoring C({j}) is not 0/1")
    bad = ~(np.isnan(ds.A) | ((ds.A >= 0) & (ds.A == np.round(ds.A))))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"subject {ds.ids[i]!r}: treatment A({j}) = {ds.A[i, j]!r} is not a code")


def _raise_on_conflict(ids, p0, c0, K):
    conflict = (p0 < K) & (p0 >= c0)
    if conflict.any():
        i = int(np.flatnonzero(conflict)[0])
        raise ConventionConflictError(ids[i], int(p0[i]) + 1,
                                      f"subject {ids[i]!r}: event at Y({p0[i] + 1}) but censored "
                                      f"from follow-up {c0[i] + 1}")


def _conform(p0, c0, K, L):
    cols = np.arange(K)[None, :]
    c0 = np.where(p0 < c0, K, c0)
    Y = np.where(cols >= p0[:, None], 1.0, 0.0)
    Y = np.where(cols >= c0[:, None], np.nan, Y)
    C = (cols >= c0[:, None]).astype(np.int8)
    L = np.array(L, copy=True)
    if L.shape[1]:
        lmask = np.arange(K - 1)[None, :] >= c0[:, None]
        L[lmask] = np.nan
    return Y, C, L


def _competing_conventions(raw: CompetingDataset) -> CompetingDataset:
    _check_codes(raw)
    _check_codes(raw.replace(Y=raw.Y_ce))
    c0 = np.minimum.reduce([_first_index(raw.C == 1), _first_index(np.isnan(raw.Y)),
                            _first_index(np.isnan(raw.Y_ce))])
    p0 = _first_index(raw.Y == 1)
    q0 = _first_index(raw.Y_ce == 1)
    both = (p0 < raw.K) & (p0 == q0)
    if both.any():
        i = int(np.flatnonzero(both)[0])
        raise ConventionConflictError(raw.ids[i], int(p0[i]) + 1,
                                      f"subject {raw.ids[i]!r}: primary and competing events both at {p0[i] + 1}")
    first = np.minimum(p0, q0)
    _raise_on_conflict(raw.ids, first, c0, raw.K)
    p0, q0 = np.where(p0 < q0, p0, raw.K), np.where(q0 < p0, q0, raw.K)
    Y, C, L = _conform(first, c0, raw.K, raw.L)
    cols = np.arange(raw.K)[None, :]
    Y_pe = np.where(np.isnan(Y), np.nan, (cols >= p0[:, None]).astype(float))
    Y_ce = np.where(np.isnan(Y), np.nan, (cols >= q0[:, None]).astype(float))
    return raw.replace(Y=Y_pe, Y_ce=Y_ce, C=C, L=L)


def validate_dataset(ds: TrialDataset) -> list[Violation]:
    """Report every violated record invariant; an empty list means conforming."""
    out: list[Violation] = []
    ids = ds.ids
    if len(set(ids)) != len(ids):
        seen = set()
        for i in ids:
            if i in seen:
                out.append(Violation(i, 0, "unique-id"))
            seen.add(i)
    outcomes = [("", ds.Y)]
    if isinstance(ds, CompetingDataset):
        outcomes.append(("competing-", ds.Y_ce))
    cens = ds.C == 1
    for prefix, Y in outcomes:
        ev = Y == 1
        # Y(t) = 0 after an earlier event
        seen_event = np.cumsum(ev, axis=1) > 0
        prev = np.zeros_like(seen_event)
        prev[:, 1:] = seen_event[:, :-1]
        for i, j in np.argwhere(prev & (Y == 0)):
            out.append(Violation(ids[i], int(j) + 1, prefix + "outcome-monotonicity",
                                 f"Y({j + 1}) = 0 after an earlier event"))
        na = np.isnan(Y)
        for i, j in np.argwhere(na != cens):
            what = "NA at uncensored" if na[i, j] else "observed at censored"
            out.append(Violation(ids[i], int(j) + 1, prefix + "missingness-convention",
                                 f"Y({j + 1}) {what} follow-up"))
        bad = ~(na | (Y == 0) | (Y == 1))
        for i, j in np.argwhere(bad):
            out.append(Violation(ids[i], int(j) + 1, prefix + "outcome-code"))
    after = np.cumsum(cens, axis=1) > 0
    for i, j in np.argwhere(after & ~cens):
        out.append(Violation(ids[i], int(j), "censoring-absorbency", f"C({j}) uncensored after censoring"))
    if ds.L.shape[1] and ds.L.shape[2]:
        lobs = ~np.isnan(ds.L).all(axis=2)
        for i, j in np.argwhere(lobs & cens[:, : ds.K - 1]):
            out.append(Violation(ids[i], int(j) + 1, "covariate-after-censoring",
                                 f"L({j + 1}) observed at censored follow-up"))
    bad = ~(np.isnan(ds.A) | ((ds.A >= 0) & (ds.A == np.round(ds.A))))
    for i, j in np.argwhere(bad):
        out.append(Violation(ids[i], int(j), "treatment-code"))
    if isinstance(ds, CompetingDataset):
        for i, j in np.argwhere((ds.Y == 1) & (ds.Y_ce == 1)):
            out.append(Violation(ids[i], int(j) + 1, "competing-exclusion", "both events at once"))
        pe_seen = np.cumsum(ds.Y == 1, axis=1) > 0
        ce_seen = np.cumsum(ds.Y_ce == 1, axis=1) > 0
        for i, j in np.argwhere((pe_seen & (ds.Y_ce == 1)) | (ce_seen & (ds.Y == 1))):
            out.append(Violation(ids[i], int(j) + 1, "competing-exclusion", "event after the other cause"))
    return out


def at_risk(ds: TrialDataset, t: int, arm=None) -> np.ndarray:
    """Boolean mask of subjects at risk of the event at follow-up ``t``."""
    if not 1 <= t <= ds.K:
        raise ValueError(f"follow-up {t} outside 1..{ds.K}")
    mask = ds.C[:, t - 1] == 0
    if t > 1:
        mask &= ds.Y[:, t - 2] == 0
        if isinstance(ds, CompetingDataset):
            mask &= ds.Y_ce[:, t - 2] == 0
    if arm is not None:
        mask &= ds.arm == arm
    return mask


def risk_set(ds: TrialDataset, t: int, arm=None) -> frozenset:
    return frozenset(ds.ids[at_risk(ds, t, arm)])


class Summary(enum.Enum):
    SURVIVAL_AT_K = "survival_at_k"
    SURVIVAL_DIFFERENCE = "survival_difference"
    CIF_AT_K = "cif_at_k"
    SACE_ORACLE = "sace_oracle"


@dataclass(frozen=True)
class EstimandSpec:
    summary: Summary
    regimes: tuple
    horizon: int
    plan: object = None

    def __post_init__(self):
        two = self.summary in (Summary.SURVIVAL_DIFFERENCE, Summary.SACE_ORACLE)
        if two and len(self.regimes) != 2:
            raise ValueError(f"{self.summary.value} needs exactly two regimes")
        if not two and len(self.regimes) not in (1, 2):
            raise ValueError("one or two regimes expected")
        for r in self.regimes:
            if self.horizon > len(r.abar) or self.horizon < 1:
                raise ValueError(f"horizon {self.horizon} outside the regime length")


def event_month(Y: np.ndarray) -> np.ndarray:
    """1-based month of the first event, or K+1 when none is observed."""
    return _first_index(Y == 1) + 1


def censor_month(C: np.ndarray) -> np.ndarray:
    """1-based month of the first missing outcome, or K+1 when never censored."""
    return _first_index(C == 1) + 1
