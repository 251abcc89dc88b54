"""Wide-format CSV reading and writing.

Columns are ``id, A0..A{K-1}, C0..C{K-1}, Y1..YK`` followed by
``W_<name>`` baseline covariates, ``L{t}_<name>`` time-varying covariates
for t = 1..K-1, ``YCE1..YCEK`` for competing-event data and an optional
``censor_kind`` column.  Missing outcomes are spelled ``NA`` and absent
treatment ``NULL``.  Floats are written with ``repr`` so a save/load round
trip is exact.
"""
from __future__ import annotations

import csv
import io as _io
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .data import CompetingDataset, TrialDataset, apply_conventions, validate_dataset
from .strategies import IceRecord

NA_TOKEN = "NA"
ABSENT_TOKEN = "NULL"
CENSOR_LABELS = {"0": 0, "1": 1, "uncensored": 0, "censored": 1}


class CsvFormatError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class DataValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"{len(self.violations)} convention violation(s); first: {self.violations[0]}")


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float, nan_token: str = NA_TOKEN) -> str:
    if np.isnan(v):
        return nan_token
    if float(v).is_integer() and abs(v) < 2 ** 53:
        return str(int(v))
    return repr(float(v))


def _rows_to_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def dataset_header(ds: TrialDataset) -> list[str]:
    K = ds.K
    h = ["id"] + [f"A{t}" for t in range(K)] + [f"C{t}" for t in range(K)] + [f"Y{t}" for t in range(1, K + 1)]
    h += [f"W_{n}" for n in ds.covariate_names]
    h += [f"L{t}_{n}" for t in range(1, K) for n in ds.time_covariate_names]
    if isinstance(ds, CompetingDataset):
        h += [f"YCE{t}" for t in range(1, K + 1)]
    if any(ds.censor_kind):
        h.append("censor_kind")
    return h


def dataset_to_csv(ds: TrialDataset, censor_encoding: str = "01") -> str:
    labels = ("0", "1") if censor_encoding == "01" else ("uncensored", "censored")
    q = len(ds.time_covariate_names)
    has_kind = any(ds.censor_kind)
    rows = []
    for i in range(ds.n):
        r = [ds.ids[i]]
        r += [_fmt(a, ABSENT_TOKEN) for a in ds.A[i]]
        r += [labels[int(c)] for c in ds.C[i]]
        r += [_fmt(y) for y in ds.Y[i]]
        r += [_fmt(w) for w in ds.W[i]]
        r += [_fmt(ds.L[i, t, j]) for t in range(ds.K - 1) for j in range(q)]
        if isinstance(ds, CompetingDataset):
            r += [_fmt(y) for y in ds.Y_ce[i]]
        if has_kind:
            r.append(ds.censor_kind[i])
        rows.append(r)
    return _rows_to_text(dataset_header(ds), rows)


def save_dataset(ds: TrialDataset, path, censor_encoding: str = "01") -> None:
    atomic_write_text(path, dataset_to_csv(ds, censor_encoding))


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    return rows[0], rows[1:]


def _parse_float(tok, line, col, nan_tokens=(NA_TOKEN,)):
    tok = tok.strip()
    if tok in nan_tokens:
        return np.nan
    try:
        return float(tok)
    except ValueError:
        raise CsvFormatError(f"unparseable cell {tok!r}", line, col) from None


_COL = re.compile(r"^(A|C|Y|YCE)(\d+)$|^W_(.+)$|^L(\d+)_(.+)$")


def load_dataset(path, censor_encoding: str = "01", conform: bool = True, validate: bool = True,
                 covariates=None, time_covariates=None) -> TrialDataset:
    """Parse a wide-format CSV.

    ``conform`` applies the outcome conventions after parsing; ``validate``
    raises :class:`DataValidationError` on any remaining violation.
    ``covariates``/``time_covariates`` optionally name the covariates the
    caller expects; a missing one is reported as an unknown column.
    """
    header, body = _read_csv(path)
    if not header or header[0] != "id":
        raise CsvFormatError("first column must be 'id'", 1, header[0] if header else None)
    if len(set(header)) != len(header):
        raise CsvFormatError("duplicate column names", 1)
    idx = {"A": {}, "C": {}, "Y": {}, "YCE": {}}
    wcols, lcols, kind_col = [], {}, None
    for j, name in enumerate(header[1:], start=1):
        if name == "censor_kind":
            kind_col = j
            continue
        m = _COL.match(name)
        if not m:
            raise CsvFormatError("unknown column", 1, name)
        if m.group(1):
            idx[m.group(1)][int(m.group(2))] = j
        elif m.group(3):
            wcols.append((m.group(3), j))
        else:
            lcols.setdefault(m.group(5), {})[int(m.group(4))] = j
    K = len(idx["A"])
    if K < 1:
        raise CsvFormatError("no treatment columns A0..", 1)
    expect = {"A": range(K), "C": range(K), "Y": range(1, K + 1)}
    for key, rng in expect.items():
        if sorted(idx[key]) != list(rng):
            raise CsvFormatError(f"{key} columns must be {key}{rng.start}..{key}{rng.stop - 1}", 1)
    competing = bool(idx["YCE"])
    if competing and sorted(idx["YCE"]) != list(range(1, K + 1)):
        raise CsvFormatError(f"YCE columns must be YCE1..YCE{K}", 1)
    tnames = list(lcols)
    for nm, cols in lcols.items():
        if sorted(cols) != list(range(1, K)):
            raise CsvFormatError(f"time-varying covariate {nm!r} needs L1..L{K - 1}", 1)
    for want, have in ((covariates, [n for n, _ in wcols]), (time_covariates, tnames)):
        for nm in want or ():
            if nm not in have:
                raise CsvFormatError("unknown column", 1, nm)

    n = len(body)
    ids, kinds = [], []
    A = np.empty((n, K))
    C = np.empty((n, K), dtype=np.int8)
    Y = np.empty((n, K))
    Yce = np.empty((n, K)) if competing else None
    W = np.empty((n, len(wcols)))
    L = np.empty((n, max(K - 1, 0), len(tnames)))
    encoding = CENSOR_LABELS if censor_encoding == "labels" else {"0": 0, "1": 1}
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != len(header):
            raise CsvFormatError(f"expected {len(header)} cells, found {len(row)}", line)
        ids.append(row[0].strip())
        for t in range(K):
            A[r, t] = _parse_float(row[idx["A"][t]], line, header[idx["A"][t]], (ABSENT_TOKEN,))
            tok = row[idx["C"][t]].strip().lower() if censor_encoding == "labels" else row[idx["C"][t]].strip()
            if tok not in encoding:
                raise CsvFormatError(f"unparseable censoring cell {tok!r}", line, header[idx["C"][t]])
            C[r, t] = encoding[tok]
            Y[r, t] = _parse_float(row[idx["Y"][t + 1]], line, header[idx["Y"][t + 1]])
            if competing:
                Yce[r, t] = _parse_float(row[idx["YCE"][t + 1]], line, header[idx["YCE"][t + 1]])
        for k, (nm, j) in enumerate(wcols):
            W[r, k] = _parse_float(row[j], line, header[j], ())
        for k, nm in enumerate(tnames):
            for t, j in lcols[nm].items():
                L[r, t - 1, k] = _parse_float(row[j], line, header[j])
        kinds.append(row[kind_col].strip() if kind_col is not None else "")
    meta = dict(ids=ids, W=W, A=A, C=C, Y=Y, L=L, covariate_names=tuple(n for n, _ in wcols),
                time_covariate_names=tuple(tnames), censor_kind=np.array(kinds, dtype=object))
    ds = CompetingDataset(Y_ce=Yce, **meta) if competing else TrialDataset(**meta)
    if conform:
        ds = apply_conventions(ds)
    if validate:
        bad = validate_dataset(ds)
        if bad:
            raise DataValidationError(bad)
    return ds


def save_ices(ices, path) -> None:
    rows = [[r.id, r.kind, r.month, "1" if r.terminal else "0"] for r in ices]
    atomic_write_text(path, _rows_to_text(["id", "kind", "month", "terminal"], rows))


def load_ices(path) -> list[IceRecord]:
    header, body = _read_csv(path)
    want = ["id", "kind", "month", "terminal"]
    if [h.strip() for h in header] != want:
        raise CsvFormatError(f"ICE file header must be {','.join(want)}", 1)
    out = []
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != 4:
            raise CsvFormatError("expected 4 cells", line)
        try:
            month = int(row[2])
        except ValueError:
            raise CsvFormatError(f"unparseable month {row[2]!r}", line, "month") from None
        term = row[3].strip().lower()
        if term not in ("0", "1", "true", "false"):
            raise CsvFormatError(f"unparseable flag {row[3]!r}", line, "terminal")
        if month < 1:
            raise CsvFormatError("ICE month must be positive", line, "month")
        out.append(IceRecord(row[0].strip(), row[1].strip(), month, term in ("1", "true")))
    return out


def load_times(path):
    """Read ``id, tY, tC[, tI][, arm]``.

    Returns ids, ``tY``, ``tC``, ``tI`` (None when absent) and the arm codes
    (0 when absent).  Empty or ``inf`` cells mean the time is never reached.
    """
    header, body = _read_csv(path)
    header = [h.strip() for h in header]
    optional = header[3:]
    if header[:3] != ["id", "tY", "tC"] or optional not in ([], ["tI"], ["arm"], ["tI", "arm"]):
        raise CsvFormatError("header must be id,tY,tC[,tI][,arm]", 1)
    cols = len(header)
    ids, vals = [], np.empty((len(body), cols - 1))
    for r, row in enumerate(body):
        if len(row) != cols:
            raise CsvFormatError(f"expected {cols} cells", r + 2)
        ids.append(row[0].strip())
        for j in range(1, cols):
            tok = row[j].strip()
            vals[r, j - 1] = np.inf if tok.lower() in ("inf", "") else _parse_float(tok, r + 2, header[j], ())
    col = {name: vals[:, j - 1] for j, name in enumerate(header) if j}
    arm = col.get("arm", np.zeros(len(ids)))
    return ids, col["tY"], col["tC"], col.get("tI"), arm


def save_oracle(potential, ids, K: int, path) -> None:
    """Potential times and principal-stratum labels, one row per subject."""
    from .simulate import classify_principal_strata

    strata = classify_principal_strata(potential.ice_indicator(K, 1), potential.ice_indicator(K, 0))
    header = ["id", "arm", "tY1", "tY0", "tI1", "tI0", "surv1", "surv0", "stratum"]
    s1, s0 = potential.survival(K, 1), potential.survival(K, 0)
    rows = [[ids[i], _fmt(potential.arm[i]), repr(float(potential.tY1[i])), repr(float(potential.tY0[i])),
             repr(float(potential.tI1[i])), repr(float(potential.tI0[i])), _fmt(s1[i]), _fmt(s0[i]), strata[i]]
            for i in range(len(ids))]
    atomic_write_text(path, _rows_to_text(header, rows))
