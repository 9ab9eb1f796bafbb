"""Sparse linear classifier for the current disease course.

The classifier regresses the +/-1 labels on standardized features with a
squared loss and an elastic-net penalty, then thresholds the margin at 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._linear import SquaredLoss, standardization, standardize
from .errors import ArgumentError, DegenerateDataError
from .prox import SolverConfig, fista_minimize, prox_elastic_net

FORMAT_VERSION = 1


@dataclass(frozen=True)
class DiagnosisModel:
    w: np.ndarray
    intercept: float
    means: np.ndarray
    stddevs: np.ndarray
    tau: float
    mu: float
    feature_names: tuple = ()

    @property
    def selected_indices(self):
        return np.flatnonzero(self.w)

    @property
    def n_features(self):
        return self.w.shape[0]

    def margins(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise ArgumentError(f"expected {self.n_features} features, got {X.shape[-1]}")
        return standardize(X, self.means, self.stddevs) @ self.w + self.intercept

    def predict(self, X):
        """Labels for each row of ``X``; margin 0 maps to -1 (RR)."""
        return np.where(self.margins(X) > 0, 1, -1)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "w": self.w.tolist(),
            "intercept": float(self.intercept),
            "means": self.means.tolist(),
            "stddevs": self.stddevs.tolist(),
            "tau": float(self.tau),
            "mu": float(self.mu),
            "selected_indices": self.selected_indices.tolist(),
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format_version") != FORMAT_VERSION:
            raise ArgumentError(f"unsupported diagnosis model format {doc.get('format_version')!r}")
        model = cls(
            w=np.asarray(doc["w"], dtype=float),
            intercept=float(doc["intercept"]),
            means=np.asarray(doc["means"], dtype=float),
            stddevs=np.asarray(doc["stddevs"], dtype=float),
            tau=float(doc["tau"]),
            mu=float(doc["mu"]),
            feature_names=tuple(doc.get("feature_names", ())),
        )
        if model.selected_indices.tolist() != list(doc["selected_indices"]):
            raise ArgumentError("selected_indices disagree with the nonzero pattern of w")
        return model


def save_model(model: DiagnosisModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path) -> DiagnosisModel:
    with open(path, encoding="utf-8") as fh:
        return DiagnosisModel.from_dict(json.load(fh))


def _check_labels(y):
    y = np.asarray(y, dtype=float)
    if y.shape[0] < 2:
        raise DegenerateDataError("need at least 2 samples")
    classes = set(np.unique(y).tolist())
    if not classes <= {-1.0, 1.0}:
        raise ArgumentError(f"labels must be -1/+1, found {sorted(classes)}")
    if len(classes) < 2:
        raise DegenerateDataError("labels contain a single class")
    return y


class _Problem:
    """Standardized design and centered labels for one training set."""

    def __init__(self, X, y):
        self.y = _check_labels(y)
        self.means, self.stds = standardization(X)
        self.ybar = float(self.y.mean())
        self.loss = SquaredLoss(standardize(X, self.means, self.stds), self.y - self.ybar)
        self._L = None

    @property
    def L(self):
        if self._L is None:
            self._L = self.loss.lipschitz()
            if self._L == 0:
                raise DegenerateDataError("all features are constant")
        return self._L

    def tau_max(self):
        return float(np.max(np.abs(self.loss.grad_at_zero())))

    def solve(self, tau, mu, config, w0=None):
        if tau < 0 or mu < 0:
            raise ArgumentError("tau and mu must be nonnegative")
        loss = self.loss

        def objective(w):
            return loss.value(w) + tau * np.abs(w).sum() + mu * float(w @ w)

        w0 = np.zeros(loss.X.shape[1]) if w0 is None else w0
        w, report = fista_minimize(
            loss.grad,
            lambda v, step: prox_elastic_net(v, step, tau, mu),
            self.L,
            w0,
            config,
            objective=objective,
        )
        return w, report

    def model(self, w, tau, mu, feature_names=()):
        return DiagnosisModel(w, self.ybar, self.means, self.stds, float(tau), float(mu),
                              tuple(feature_names))


def tau_max(X, y):
    """Smallest l1 weight for which ``w = 0`` is optimal (standardized scale)."""
    return _Problem(X, y).tau_max()


def fit_diagnosis(data, tau, mu, config: SolverConfig = SolverConfig(), return_report=False):
    """Fit the elastic-net classifier on a :class:`DiagnosisDataset`.

    Minimizes ``(1/N)||Xs w - yc||^2 + tau ||w||_1 + mu ||w||^2`` over
    standardized features ``Xs`` and centered labels ``yc``; the intercept
    is the label mean and is not penalized.
    """
    prob = _Problem(data.X, data.y)
    w, report = prob.solve(tau, mu, config)
    model = prob.model(w, tau, mu, getattr(data, "feature_names", ()))
    return (model, report) if return_report else model


def fit_path(X, y, taus: Sequence[float], mu, config: SolverConfig = SolverConfig(),
             feature_names=()):
    """Fit along ``taus`` (any order) with warm starts; returns models in input order."""
    prob = _Problem(X, y)
    order = np.argsort(-np.asarray(taus, dtype=float), kind="stable")
    models: list = [None] * len(taus)
    w = None
    for i in order:
        w, _ = prob.solve(float(taus[i]), mu, config, w0=w)
        models[i] = prob.model(w, taus[i], mu, feature_names)
    return models


def predict_course(model: DiagnosisModel, x):
    """``(label, margin)`` for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_features,):
        raise ArgumentError(f"expected a vector of {model.n_features} features, got shape {x.shape}")
    margin = float(model.margins(x))
    return (1 if margin > 0 else -1), margin


def selected_variables(model: DiagnosisModel):
    """Sorted 0-based indices of the nonzero weights."""
    return model.selected_indices
