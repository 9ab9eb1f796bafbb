"""Composition of the course classifier with the evolution regressor.

``f o g`` predicts the next disease course from the current answers:
``g`` forecasts the selected answers one step ahead, those forecasts are
written into the current vector, and ``f`` classifies the result.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .cohort import LongitudinalCohort, MedianImputer
from .diagnosis import DiagnosisModel, predict_course
from .errors import ArgumentError, CompositionError, EmptyDatasetError
from .evolution import EvolutionModel, predict_next


class FillPolicy(str, Enum):
    HOLD_LAST = "hold_last"
    LEARNING_MEAN = "learning_mean"


def _check_composable(f: DiagnosisModel, g: EvolutionModel):
    if f.n_features != g.n_features:
        raise CompositionError(
            f"diagnosis model has {f.n_features} inputs, evolution model has {g.n_features}"
        )
    missing = sorted(set(f.selected_indices.tolist()) - set(g.selected_indices))
    if missing:
        raise CompositionError(
            f"diagnosis model uses variables {missing} that the evolution model does not predict"
        )


def prognose_one_step(f: DiagnosisModel, g: EvolutionModel, x):
    """``(label, margin, x_hat_selected)`` for the next time point."""
    _check_composable(f, g)
    x = np.asarray(x, dtype=float)
    x_hat = predict_next(g, x)
    z = x.copy()
    z[list(g.selected_indices)] = x_hat
    label, margin = predict_course(f, z)
    return label, margin, x_hat


def concordance_rate(predicted, clinician):
    """Fraction of positions where the two label sequences agree."""
    a = np.asarray(predicted)
    b = np.asarray(clinician)
    if a.shape != b.shape or a.ndim != 1:
        raise ArgumentError(f"label sequences must be 1-D and of equal length, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ArgumentError("label sequences are empty")
    return float(np.count_nonzero(a == b)) / a.size


def rollout(f: DiagnosisModel, g: EvolutionModel, x_last, horizon: int,
            fill: FillPolicy = FillPolicy.HOLD_LAST):
    """Iterate ``f o g`` for ``horizon`` steps from ``x_last``.

    Predicted selected answers replace their positions each step. The first
    step reads the observed ``x_last``; from then on the other positions keep
    ``x_last`` (``HOLD_LAST``) or the learning-set means of ``g``'s inputs
    (``LEARNING_MEAN``). Returns ``[(step, label, margin)]``.
    """
    _check_composable(f, g)
    if horizon < 1:
        raise ArgumentError(f"horizon must be >= 1, got {horizon}")
    fill = FillPolicy(fill)
    z = np.array(x_last, dtype=float, copy=True)
    if z.shape != (g.n_features,):
        raise ArgumentError(f"expected a vector of {g.n_features} features, got shape {z.shape}")
    sel = list(g.selected_indices)
    out = []
    for step in range(1, horizon + 1):
        x_hat = predict_next(g, z)
        if step == 1 and fill is FillPolicy.LEARNING_MEAN:
            z = g.means.copy()
        z[sel] = x_hat
        label, margin = predict_course(f, z)
        out.append((step, label, margin))
    return out


@dataclass
class PrognosisRecord:
    patient_id: str
    time_point: int
    predicted: int
    margin: float
    clinician_label: Optional[int] = None
    x_hat: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class PrognosisResult:
    records: list

    @property
    def scored(self):
        return [r for r in self.records if r.clinician_label is not None]

    @property
    def n_scored(self):
        return len(self.scored)

    @property
    def concordance(self):
        s = self.scored
        if not s:
            return None
        return concordance_rate([r.predicted for r in s], [r.clinician_label for r in s])


def evaluate_teacher_forced(f, g, test: LongitudinalCohort, imputer: MedianImputer):
    """Score ``f o g`` on observed ``x^t`` against clinician ``y^{t+1}``.

    Every pair of consecutive test observations whose later time point is
    labeled yields one record. Records are sorted by patient then time.
    """
    _check_composable(f, g)
    records = []
    for p in sorted(test.patients, key=lambda p: p.patient_id):
        for t in p.times:
            if t + 1 in p.labels:
                x = imputer.transform(p.observations[t])
                label, margin, x_hat = prognose_one_step(f, g, x)
                records.append(PrognosisRecord(p.patient_id, t + 1, label, margin,
                                               p.labels[t + 1], x_hat))
    if not records:
        raise EmptyDatasetError("test set has no consecutive pairs with a labeled target")
    return PrognosisResult(records)


def rollout_cohort(f, g, cohort: LongitudinalCohort, imputer: MedianImputer, horizon: int,
                   fill: FillPolicy = FillPolicy.HOLD_LAST):
    """Roll every patient forward from their last observed visit.

    Returns records keyed by ``(patient_id, last_t + step)`` plus a per-step
    SP fraction.
    """
    records = []
    for p in sorted(cohort.patients, key=lambda p: p.patient_id):
        t_last = p.times[-1]
        x = imputer.transform(p.observations[t_last])
        for step, label, margin in rollout(f, g, x, horizon, fill):
            records.append((p.patient_id, t_last, step, t_last + step, label, margin))
    sp_fraction = []
    for step in range(1, horizon + 1):
        labels = [r[4] for r in records if r[2] == step]
        sp_fraction.append(sum(1 for y in labels if y == 1) / len(labels))
    return records, sp_fraction


def write_prognosis_report(result: PrognosisResult, csv_path, json_path):
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "time_point", "predicted", "margin", "clinician_label"])
        for r in result.records:
            w.writerow([r.patient_id, r.time_point, r.predicted, repr(r.margin),
                        "" if r.clinician_label is None else r.clinician_label])
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"concordance": result.concordance, "n_scored": result.n_scored}, fh, indent=1)
        fh.write("\n")
