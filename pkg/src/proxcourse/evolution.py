"""Multi-output regressor for the next-visit values of the selected answers.

``g`` maps the full current answer vector to the selected answers one
time point later. Inputs are standardized, outputs only centered, and the
weight matrix carries an L2,1 penalty so each input is either used for
every output or for none.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.model_selection import KFold

from ._linear import SquaredLoss, standardization, standardize
from .errors import ArgumentError, EmptyDatasetError
from .prox import SolverConfig, fista_minimize, prox_row_group

FORMAT_VERSION = 1


@dataclass(frozen=True)
class EvolutionModel:
    W: np.ndarray
    intercepts: np.ndarray
    means: np.ndarray
    stddevs: np.ndarray
    selected_indices: tuple
    tau_g: float

    def __post_init__(self):
        if self.W.shape[1] != len(self.selected_indices):
            raise ArgumentError("W column count must equal the number of selected outputs")

    @property
    def n_features(self):
        return self.W.shape[0]

    @property
    def active_rows(self):
        return np.flatnonzero(np.linalg.norm(self.W, axis=1))

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise ArgumentError(f"expected {self.n_features} features, got {X.shape[-1]}")
        return standardize(X, self.means, self.stddevs) @ self.W + self.intercepts

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "W": self.W.tolist(),
            "intercepts": self.intercepts.tolist(),
            "means": self.means.tolist(),
            "stddevs": self.stddevs.tolist(),
            "tau_g": float(self.tau_g),
            "selected_indices": list(self.selected_indices),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format_version") != FORMAT_VERSION:
            raise ArgumentError(f"unsupported evolution model format {doc.get('format_version')!r}")
        sel = tuple(int(j) for j in doc["selected_indices"])
        W = np.asarray(doc["W"], dtype=float).reshape(-1, len(sel))
        return cls(W, np.asarray(doc["intercepts"], dtype=float),
                   np.asarray(doc["means"], dtype=float), np.asarray(doc["stddevs"], dtype=float),
                   sel, float(doc["tau_g"]))


def save_model(model: EvolutionModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path) -> EvolutionModel:
    with open(path, encoding="utf-8") as fh:
        return EvolutionModel.from_dict(json.load(fh))


class _Problem:
    def __init__(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] < 2:
            raise EmptyDatasetError(f"need at least 2 pairs, got {X.shape[0]}")
        self.means, self.stds = standardization(X)
        self.ybar = Y.mean(axis=0)
        self.loss = SquaredLoss(standardize(X, self.means, self.stds), Y - self.ybar)
        self._L = None

    @property
    def L(self):
        if self._L is None:
            self._L = self.loss.lipschitz()
        return self._L

    def tau_max(self):
        return float(np.max(np.linalg.norm(self.loss.grad_at_zero(), axis=1)))

    def solve(self, tau, config, W0=None):
        if tau < 0:
            raise ArgumentError("tau_g must be nonnegative")
        loss = self.loss
        shape = (loss.X.shape[1], loss.Y.shape[1])
        W0 = np.zeros(shape) if W0 is None else W0
        if self.L == 0:
            # every input is constant: only the intercepts carry information
            return W0 * 0.0, None

        def objective(W):
            return loss.value(W) + tau * np.linalg.norm(W, axis=1).sum()

        return fista_minimize(loss.grad, lambda V, step: prox_row_group(V, step, tau),
                              self.L, W0, config, objective=objective)

    def model(self, W, tau, selected):
        return EvolutionModel(W, self.ybar.copy(), self.means, self.stds, tuple(selected), float(tau))


def tau_max_evolution(X, Y):
    """Smallest L2,1 weight for which ``W = 0`` is optimal."""
    return _Problem(X, Y).tau_max()


def fit_evolution(data, tau_g, config: SolverConfig = SolverConfig(), return_report=False):
    prob = _Problem(data.X, data.Y)
    W, report = prob.solve(tau_g, config)
    model = prob.model(W, tau_g, data.selected_indices)
    return (model, report) if return_report else model


def predict_next(model: EvolutionModel, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_features,):
        raise ArgumentError(f"expected a vector of {model.n_features} features, got shape {x.shape}")
    return model.predict(x)


def default_tau_grid(data, n_tau=10, ratio=1e-3):
    top = tau_max_evolution(data.X, data.Y)
    if top == 0:
        return np.zeros(1)
    return np.geomspace(top, top * ratio, n_tau)


def select_tau(data, taus: Sequence[float], k_folds=3, seed=0, config: SolverConfig = SolverConfig()):
    """Pick ``tau_g`` by k-fold validation MSE; ties go to the larger ``tau_g``.

    Returns ``(tau, mean_mse_per_tau)``.
    """
    if k_folds < 2:
        raise ArgumentError("k_folds must be >= 2")
    taus = np.asarray(taus, dtype=float)
    order = np.argsort(-taus, kind="stable")
    mse = np.zeros(len(taus))
    folds = KFold(n_splits=k_folds, shuffle=True, random_state=seed).split(data.X)
    for train, val in folds:
        prob = _Problem(data.X[train], data.Y[train])
        W = None
        for i in order:
            W, _ = prob.solve(float(taus[i]), config, W0=W)
            pred = prob.model(W, taus[i], data.selected_indices).predict(data.X[val])
            mse[i] += np.mean((pred - data.Y[val]) ** 2) / k_folds
    best = min(order, key=lambda i: (mse[i], -taus[i]))
    return float(taus[best]), mse
