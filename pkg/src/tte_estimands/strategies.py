"""Intercurrent-event handling strategies as rewrites of the A/C/Y nodes."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import CompetingDataset, TrialDataset, apply_conventions, censor_month, event_month


class Strategy(enum.Enum):
    COMPOSITE = "composite"
    TREATMENT_POLICY = "treatment_policy"
    HYPOTHETICAL = "hypothetical"
    WHILE_ON_TREATMENT_ALT1 = "while_on_treatment_alt1"
    WHILE_ON_TREATMENT_ALT2 = "while_on_treatment_alt2"
    COMPETING_RISK = "competing_risk"
    PRINCIPAL_STRATUM = "principal_stratum"


TERMINAL_STRATEGIES = (Strategy.COMPOSITE, Strategy.COMPETING_RISK)
_DEFAULT_RANK = {
    Strategy.COMPOSITE: 0,
    Strategy.COMPETING_RISK: 0,
    Strategy.TREATMENT_POLICY: 1,
    Strategy.HYPOTHETICAL: 2,
    Strategy.WHILE_ON_TREATMENT_ALT1: 2,
    Strategy.WHILE_ON_TREATMENT_ALT2: 3,
    Strategy.PRINCIPAL_STRATUM: 3,
}


class PlanIncompleteError(ValueError):
    pass


@dataclass(frozen=True)
class IceRecord:
    id: str
    kind: str
    month: int
    terminal: bool = False


@dataclass(frozen=True)
class RegimeSpec:
    abar: tuple

    def __post_init__(self):
        abar = tuple(int(a) for a in self.abar)
        if not abar:
            raise ValueError("regime must have at least one follow-up")
        if any(a < 0 for a in abar):
            raise ValueError("treatment codes are nonnegative integers")
        object.__setattr__(self, "abar", abar)

    @property
    def K(self) -> int:
        return len(self.abar)

    @classmethod
    def static(cls, code: int, K: int) -> "RegimeSpec":
        return cls((code,) * K)


@dataclass(frozen=True)
class StrategyPlan:
    """Ordered ICE-kind to strategy assignments."""

    steps: tuple

    def __post_init__(self):
        steps = tuple((str(k), Strategy(s)) for k, s in self.steps)
        kinds = [k for k, _ in steps]
        if len(set(kinds)) != len(kinds):
            raise ValueError("each ICE kind may be mapped at most once")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def from_mapping(cls, mapping, order: str = "default") -> "StrategyPlan":
        """Build a plan from ``{kind: strategy}``.

        ``order="default"`` puts terminal strategies first, then treatment
        policy, then hypothetical; ``order="declared"`` keeps mapping order.
        """
        steps = [(k, Strategy(v)) for k, v in dict(mapping).items()]
        if order == "default":
            steps.sort(key=lambda kv: _DEFAULT_RANK[kv[1]])
        elif order != "declared":
            raise ValueError(f"unknown order {order!r}")
        return cls(tuple(steps))

    def strategy_for(self, kind: str):
        for k, s in self.steps:
            if k == kind:
                return s
        return None


def _select(ds: TrialDataset, ices: Iterable[IceRecord], kind: str):
    """Row index and ICE record for each subject with an ICE of ``kind``.

    When a subject has several ICEs of one kind, the earliest counts.
    """
    first: dict[str, IceRecord] = {}
    for r in ices:
        if r.kind != kind:
            continue
        if not 1 <= r.month <= ds.K:
            raise ValueError(f"ICE month {r.month} for subject {r.id!r} outside 1..{ds.K}")
        if r.id not in first or r.month < first[r.id].month:
            first[r.id] = r
    index = {sid: i for i, sid in enumerate(ds.ids)}
    rows, recs = [], []
    for sid, r in first.items():
        if sid not in index:
            raise KeyError(f"ICE for unknown subject {sid!r}")
        rows.append(index[sid])
        recs.append(r)
    order = np.argsort(rows)
    return np.asarray(rows, dtype=int)[order], [recs[i] for i in order]


def _set_event(Y, C, i, m):
    Y[i, : m - 1] = 0.0
    Y[i, m - 1:] = 1.0
    C[i, :] = 0


def apply_composite(ds: TrialDataset, ices, kind: str) -> TrialDataset:
    """Fold the ICE into the outcome: the event becomes min(PE month, ICE month).

    An ICE recorded after the subject's censoring is kept out when terminal
    or when an earlier plan step produced the censoring (the censoring
    stands), and is an error otherwise.
    """
    rows, recs = _select(ds, ices, kind)
    if not len(rows):
        return ds
    Y, C = ds.Y.copy(), ds.C.copy()
    pe = event_month(ds.Y)
    cm = censor_month(ds.C)
    base = ds.Y_ce.copy() if isinstance(ds, CompetingDataset) else None
    ce = event_month(base) if base is not None else np.full(ds.n, ds.K + 1)
    for i, r in zip(rows, recs):
        m = r.month
        if m >= min(pe[i], ce[i]):
            continue
        if m > cm[i]:
            # censoring set by an earlier plan step hides the later ICE
            if r.terminal or ds.censor_kind[i]:
                continue
            raise ValueError(f"subject {ds.ids[i]!r}: non-terminal {kind!r} ICE at month {m} "
                             f"recorded after censoring at month {cm[i]}")
        _set_event(Y, C, i, m)
        if base is not None:
            # the composite event precedes any competing event
            base[i] = 0.0
    extra = {"Y_ce": base} if base is not None else {}
    out = ds.replace(Y=Y, C=C, notes=ds.notes + (f"composite:{kind}",), **extra)
    return apply_conventions(out)


def apply_treatment_policy(ds: TrialDataset, ices, kind: str) -> TrialDataset:
    """Rewrite treatment nodes from the ICE month back to the assigned code.

    Nodes after the last follow-up the subject is observed at risk (event or
    censoring) are left as recorded.
    """
    rows, recs = _select(ds, ices, kind)
    if not len(rows):
        return ds
    pe = event_month(ds.Y)
    if isinstance(ds, CompetingDataset):
        pe = np.minimum(pe, event_month(ds.Y_ce))
    stop = np.minimum(pe, censor_month(ds.C))
    A = ds.A.copy()
    for i, r in zip(rows, recs):
        A[i, r.month:stop[i]] = A[i, 0]
    return ds.replace(A=A, notes=ds.notes + (f"treatment_policy:{kind}",))


def _censor_from(ds: TrialDataset, ices, kind: str, tag: str) -> TrialDataset:
    rows, recs = _select(ds, ices, kind)
    if not len(rows):
        return ds
    pe = event_month(ds.Y)
    if isinstance(ds, CompetingDataset):
        pe = np.minimum(pe, event_month(ds.Y_ce))
    cm = censor_month(ds.C)
    C, Y = ds.C.copy(), ds.Y.copy()
    competing = isinstance(ds, CompetingDataset)
    Y_ce = ds.Y_ce.copy() if competing else None
    kinds = ds.censor_kind.copy()
    for i, r in zip(rows, recs):
        m = r.month
        # a same-month event is lost: C(m-1) precedes Y(m)
        if pe[i] < m:
            continue
        if m >= cm[i]:
            continue
        C[i, m - 1:] = 1
        Y[i, m - 1:] = np.nan
        if competing:
            Y_ce[i, m - 1:] = np.nan
        kinds[i] = kind
    extra = {"Y_ce": Y_ce} if competing else {}
    out = ds.replace(C=C, Y=Y, censor_kind=kinds, notes=ds.notes + (f"{tag}:{kind}",), **extra)
    return apply_conventions(out)


def apply_hypothetical(ds: TrialDataset, ices, kind: str) -> TrialDataset:
    """Censor affected subjects from the ICE month on."""
    return _censor_from(ds, ices, kind, "hypothetical")


def apply_while_on_treatment_alt1(ds: TrialDataset, ices, kind: str) -> TrialDataset:
    """Censor after the ICE and tag the cells for a no-treatment imputation.

    The imputation itself is run by :func:`tte_estimands.mi.combined_mi`.
    """
    return _censor_from(ds, ices, kind, "while_on_treatment_alt1")


def make_regime_while_on_treatment(k: int, K: int) -> RegimeSpec:
    if not 0 <= k <= K:
        raise ValueError(f"k must lie in 0..{K}")
    return RegimeSpec((1,) * k + (0,) * (K - k))


def apply_competing_risk(ds: TrialDataset, ices, kind: str) -> CompetingDataset:
    """Split the outcome into primary and competing components.

    The competing component jumps to 1 at the ICE month unless the primary
    event came first or in the same month.  Censoring recorded after the
    competing event is cleared; an ICE after censoring leaves the censoring.
    """
    rows, recs = _select(ds, ices, kind)
    if any(not r.terminal for r in recs):
        raise ValueError(f"competing-risk strategy needs a terminal ICE kind, {kind!r} is not")
    if isinstance(ds, CompetingDataset):
        Y_ce = ds.Y_ce.copy()
    else:
        Y_ce = np.where(np.isnan(ds.Y), np.nan, 0.0)
    Y, C = ds.Y.copy(), ds.C.copy()
    pe = event_month(ds.Y)
    ce = event_month(Y_ce)
    cm = censor_month(ds.C)
    for i, r in zip(rows, recs):
        m = r.month
        if m >= pe[i] or m >= ce[i] or m > cm[i]:
            continue
        Y[i, : m - 1] = 0.0
        Y[i, m - 1:] = 0.0
        Y_ce[i, : m - 1] = 0.0
        Y_ce[i, m - 1:] = 1.0
        C[i, :] = 0
    out = CompetingDataset(
        ids=ds.ids, W=ds.W, A=ds.A, C=C, Y=Y, Y_ce=Y_ce, L=ds.L,
        covariate_names=ds.covariate_names, time_covariate_names=ds.time_covariate_names,
        treatment_labels=ds.treatment_labels, unit=ds.unit, censor_kind=ds.censor_kind,
        notes=ds.notes + (f"competing_risk:{kind}", "competing_risk tie: primary event wins"),
    )
    return apply_conventions(out)


def _identity(ds, ices, kind, label):
    return ds.replace(notes=ds.notes + (f"{label}:{kind}",))


_APPLY = {
    Strategy.COMPOSITE: apply_composite,
    Strategy.TREATMENT_POLICY: apply_treatment_policy,
    Strategy.HYPOTHETICAL: apply_hypothetical,
    Strategy.WHILE_ON_TREATMENT_ALT1: apply_while_on_treatment_alt1,
    Strategy.COMPETING_RISK: apply_competing_risk,
    Strategy.WHILE_ON_TREATMENT_ALT2: lambda ds, ices, kind: _identity(ds, ices, kind, "regime_only"),
    Strategy.PRINCIPAL_STRATUM: lambda ds, ices, kind: _identity(ds, ices, kind, "principal_stratum_oracle_only"),
}


def apply_strategy(ds: TrialDataset, ices, kind: str, strategy) -> TrialDataset:
    return _APPLY[Strategy(strategy)](ds, ices, kind)


def compose_plan(ds: TrialDataset, ices: Sequence[IceRecord], plan: StrategyPlan) -> TrialDataset:
    """Apply each plan step in order.

    WHILE_ON_TREATMENT_ALT2 changes only the regime of interest, and
    PRINCIPAL_STRATUM is evaluated from simulated potential outcomes; both
    leave the data unchanged apart from a note.
    """
    ices = list(ices)
    present = {r.kind for r in ices}
    mapped = {k for k, _ in plan.steps}
    missing = sorted(present - mapped)
    if missing:
        raise PlanIncompleteError(f"ICE kinds without a strategy: {', '.join(missing)}")
    out = ds
    for kind, strategy in plan.steps:
        out = apply_strategy(out, ices, kind, strategy)
    return out

