"""Longitudinal cohort model, CSV ingestion and design-matrix assembly.

A cohort is a set of patients, each observed at integer time points
``1..T`` with a ``d``-dimensional vector of ordinal answers and, usually, a
disease-course label (``-1`` = RR, ``+1`` = SP). Missing answers are stored
as NaN until a :class:`MedianImputer` fills them in.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, TextIO

import numpy as np

from .errors import (
    ArgumentError,
    DuplicateObservationError,
    EmptyDatasetError,
    ImputationError,
    LabelError,
    ParseError,
)

RR, SP = -1, 1

LABEL_TOKENS = {"RR": RR, "SP": SP, "-1": RR, "+1": SP, "1": SP}


@dataclass(frozen=True)
class ColumnSpec:
    patient_id: str = "patient_id"
    time_point: str = "time_point"
    course: str = "course"


@dataclass(frozen=True)
class PatientSeries:
    patient_id: str
    observations: Mapping[int, np.ndarray]
    labels: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        for t in self.labels:
            if t not in self.observations:
                raise ArgumentError(
                    f"patient {self.patient_id}: label at t={t} has no observation"
                )

    @property
    def times(self):
        return sorted(self.observations)

    def restrict(self, lo, hi):
        obs = {t: x for t, x in self.observations.items() if lo <= t <= hi}
        labs = {t: y for t, y in self.labels.items() if lo <= t <= hi}
        return PatientSeries(self.patient_id, obs, labs)


@dataclass(frozen=True)
class LongitudinalCohort:
    patients: tuple
    n_features: int
    time_points: int
    feature_names: tuple

    def __post_init__(self):
        if len(self.feature_names) != self.n_features:
            raise ArgumentError("feature_names length must equal n_features")
        for p in self.patients:
            for t, x in p.observations.items():
                if not (isinstance(t, (int, np.integer)) and 1 <= t <= self.time_points):
                    raise ArgumentError(
                        f"patient {p.patient_id}: time point {t} outside 1..{self.time_points}"
                    )
                if x.shape != (self.n_features,):
                    raise ArgumentError(
                        f"patient {p.patient_id}, t={t}: expected {self.n_features} features"
                    )
            for t, y in p.labels.items():
                if y not in (RR, SP):
                    raise LabelError(f"patient {p.patient_id}, t={t}: label {y!r} not in {{-1,+1}}")

    def counts(self):
        """``{t: n_t}``, the number of patients observed at each time point."""
        out = {t: 0 for t in range(1, self.time_points + 1)}
        for p in self.patients:
            for t in p.observations:
                out[t] += 1
        return out

    def n_labeled(self):
        return sum(len(p.labels) for p in self.patients)

    def patient(self, patient_id):
        for p in self.patients:
            if p.patient_id == patient_id:
                return p
        raise KeyError(patient_id)


def _parse_label(token, line):
    token = token.strip()
    if token == "":
        return None
    try:
        return LABEL_TOKENS[token.upper()]
    except KeyError:
        raise LabelError(f"unknown course label {token!r}", line) from None


def load_cohort(source, schema: ColumnSpec = ColumnSpec()) -> LongitudinalCohort:
    """Parse a cohort CSV (path, text stream or string content).

    Layout is ``patient_id,time_point,course,<feature columns...>``; the
    feature columns fix ``d`` and their header names become
    ``feature_names``. Empty feature cells are missing; an empty course
    cell means the observation is unlabeled.
    """
    if isinstance(source, str) and "\n" not in source:
        with open(source, newline="", encoding="utf-8") as fh:
            return load_cohort(fh, schema)
    if isinstance(source, str):
        source = io.StringIO(source)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file; a header row is required", 1) from None
    header = [h.strip() for h in header]
    key_cols = (schema.patient_id, schema.time_point, schema.course)
    for c in key_cols:
        if c not in header:
            raise ParseError(f"missing required column {c!r}", 1)
    idx_pid, idx_t, idx_y = (header.index(c) for c in key_cols)
    feat_idx = [i for i, h in enumerate(header) if h not in key_cols]
    if not feat_idx:
        raise ParseError("no feature columns", 1)
    feature_names = tuple(header[i] for i in feat_idx)
    d = len(feat_idx)

    obs: dict = {}
    labels: dict = {}
    order: list = []
    t_max = 0
    for line_no, row in enumerate(reader, start=2):
        if not row or all(c.strip() == "" for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", line_no)
        pid = row[idx_pid].strip()
        if not pid:
            raise ParseError("empty patient_id", line_no)
        try:
            t = int(row[idx_t])
        except ValueError:
            raise ParseError(f"time_point {row[idx_t]!r} is not an integer", line_no) from None
        if t < 1:
            raise ParseError(f"time_point must be positive, got {t}", line_no)
        x = np.empty(d)
        for j, i in enumerate(feat_idx):
            cell = row[i].strip()
            if cell == "":
                x[j] = np.nan
                continue
            try:
                x[j] = float(cell)
            except ValueError:
                raise ParseError(f"feature {header[i]!r}: {cell!r} is not a number", line_no) from None
        y = _parse_label(row[idx_y], line_no)
        if pid not in obs:
            obs[pid] = {}
            labels[pid] = {}
            order.append(pid)
        if t in obs[pid]:
            raise DuplicateObservationError(f"duplicate observation for ({pid}, {t})", line_no)
        obs[pid][t] = x
        if y is not None:
            labels[pid][t] = y
        t_max = max(t_max, t)

    patients = tuple(PatientSeries(pid, obs[pid], labels[pid]) for pid in order)
    return LongitudinalCohort(patients, d, t_max, feature_names)


def _fmt(v):
    if np.isnan(v):
        return ""
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_cohort(cohort: LongitudinalCohort, dest: TextIO):
    """Write ``cohort`` in the CSV layout read by :func:`load_cohort`."""
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(["patient_id", "time_point", "course", *cohort.feature_names])
    for p in cohort.patients:
        for t in p.times:
            y = p.labels.get(t)
            course = "" if y is None else ("SP" if y == SP else "RR")
            w.writerow([p.patient_id, t, course, *(_fmt(v) for v in p.observations[t])])


@dataclass(frozen=True)
class MedianImputer:
    """Per-feature medians used to fill missing answers."""

    medians: np.ndarray

    @classmethod
    def fit(cls, cohort: LongitudinalCohort, t_range: Optional[Sequence[int]] = None):
        lo, hi = t_range if t_range is not None else (1, cohort.time_points)
        rows = [x for p in cohort.patients for t, x in p.observations.items() if lo <= t <= hi]
        if not rows:
            raise EmptyDatasetError(f"no observations in t={lo}..{hi} to fit imputation on")
        X = np.vstack(rows)
        empty = np.all(np.isnan(X), axis=0)
        if np.any(empty):
            names = [cohort.feature_names[j] for j in np.flatnonzero(empty)]
            raise ImputationError(f"features entirely missing in t={lo}..{hi}: {names}")
        return cls(np.nanmedian(X, axis=0))

    def transform(self, X):
        X = np.array(X, dtype=float, copy=True)
        mask = np.isnan(X)
        if np.any(mask):
            X[mask] = np.broadcast_to(self.medians, X.shape)[mask]
        return X


@dataclass(frozen=True)
class DiagnosisDataset:
    X: np.ndarray
    y: np.ndarray
    provenance: tuple
    feature_names: tuple = ()

    @property
    def n_samples(self):
        return self.X.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        return DiagnosisDataset(self.X[idx], self.y[idx],
                                tuple(self.provenance[i] for i in idx), self.feature_names)


@dataclass(frozen=True)
class EvolutionDataset:
    X: np.ndarray
    Y: np.ndarray
    selected_indices: tuple
    provenance: tuple
    feature_names: tuple = ()

    @property
    def n_samples(self):
        return self.X.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        return EvolutionDataset(self.X[idx], self.Y[idx], self.selected_indices,
                                tuple(self.provenance[i] for i in idx), self.feature_names)


def _check_range(cohort, t_range):
    lo, hi = t_range
    if not (1 <= lo <= hi <= cohort.time_points):
        raise ArgumentError(f"t_range {lo}..{hi} not within 1..{cohort.time_points}")
    return lo, hi


def _resolve_imputer(cohort, t_range, impute):
    if impute is None:
        return MedianImputer.fit(cohort, t_range)
    return impute


def build_diagnosis_dataset(cohort, t_range, impute: Optional[MedianImputer] = None):
    """Stack every labeled observation with ``t`` in ``t_range`` (inclusive).

    Rows are ordered by patient (cohort order) then time. Without an
    explicit ``impute``, medians are fitted on the same time range.
    """
    lo, hi = _check_range(cohort, t_range)
    rows, ys, prov = [], [], []
    for p in cohort.patients:
        for t in p.times:
            if lo <= t <= hi and t in p.labels:
                rows.append(p.observations[t])
                ys.append(p.labels[t])
                prov.append((p.patient_id, t))
    if not rows:
        raise EmptyDatasetError(f"no labeled observations in t={lo}..{hi}")
    imputer = _resolve_imputer(cohort, (lo, hi), impute)
    X = imputer.transform(np.vstack(rows))
    return DiagnosisDataset(X, np.asarray(ys, dtype=float), tuple(prov), cohort.feature_names)


def build_evolution_dataset(cohort, t_range, selected_indices: Iterable[int],
                            impute: Optional[MedianImputer] = None):
    """Pair ``x^t`` (full vector) with ``x^{t+1}`` restricted to ``selected_indices``.

    ``t_range`` bounds the *input* time ``t``; only consecutive observations
    of the same patient form a pair. Labels are not needed.
    """
    sel = tuple(int(j) for j in selected_indices)
    if not sel:
        raise ArgumentError("selected_indices must be nonempty")
    if any(j < 0 or j >= cohort.n_features for j in sel):
        raise ArgumentError(f"selected_indices must lie in 0..{cohort.n_features - 1}")
    lo, hi = t_range
    if not (1 <= lo <= hi <= cohort.time_points - 1):
        raise ArgumentError(f"t_range {lo}..{hi} not within 1..{cohort.time_points - 1}")
    xs, ys, prov = [], [], []
    for p in cohort.patients:
        for t in p.times:
            if lo <= t <= hi and t + 1 in p.observations:
                xs.append(p.observations[t])
                ys.append(p.observations[t + 1])
                prov.append((p.patient_id, t))
    if not xs:
        raise EmptyDatasetError(f"no consecutive observation pairs with t in {lo}..{hi}")
    imputer = _resolve_imputer(cohort, (lo, hi + 1), impute)
    X = imputer.transform(np.vstack(xs))
    Y = imputer.transform(np.vstack(ys))[:, list(sel)]
    return EvolutionDataset(X, Y, sel, tuple(prov), cohort.feature_names)


def split_by_time(cohort: LongitudinalCohort, t_prime: int):
    """Learning cohort (``t <= t_prime``) and test cohort (``t > t_prime``).

    Time indices stay absolute; the test cohort keeps ``time_points = T``.
    Patients with nothing on one side are dropped from that side.
    """
    if not (1 <= t_prime < cohort.time_points):
        raise ArgumentError(f"need 1 <= T' < T={cohort.time_points}, got T'={t_prime}")
    learn, test = [], []
    for p in cohort.patients:
        a = p.restrict(1, t_prime)
        b = p.restrict(t_prime + 1, cohort.time_points)
        if a.observations:
            learn.append(a)
        if b.observations:
            test.append(b)
    return (
        LongitudinalCohort(tuple(learn), cohort.n_features, t_prime, cohort.feature_names),
        LongitudinalCohort(tuple(test), cohort.n_features, cohort.time_points, cohort.feature_names),
    )
