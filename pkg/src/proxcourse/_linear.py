"""Standardization and the quadratic data term shared by both learners."""
from __future__ import annotations

import numpy as np

from .prox import LIPSCHITZ_INFLATION, lipschitz_constant


def standardization(X):
    """Per-column mean and population stddev; constant columns get stddev 1."""
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    constant = np.ptp(X, axis=0) == 0
    stds[constant] = 1.0
    return means, stds


def standardize(X, means, stds):
    return (np.asarray(X, dtype=float) - means) / stds


class SquaredLoss:
    """``(1/N) ||X W - Y||_F^2`` with cached normal-equation terms.

    ``Y`` may be a vector (single output) or an ``N x k`` matrix.
    """

    def __init__(self, X, Y):
        self.X = np.asarray(X, dtype=float)
        self.Y = np.asarray(Y, dtype=float)
        self.n = self.X.shape[0]
        self.scale = 2.0 / self.n
        # X^T Y drives both the gradient at zero and tau_max; compute it once
        self.XtY = self.X.T @ self.Y
        self._use_gram = self.X.shape[1] <= self.n
        if self._use_gram:
            self.G = self.X.T @ self.X
        self.yy = float(np.vdot(self.Y, self.Y))

    def grad(self, W):
        if self._use_gram:
            return self.scale * (self.G @ W - self.XtY)
        return self.scale * (self.X.T @ (self.X @ W - self.Y))

    def value(self, W):
        if self._use_gram:
            quad = np.vdot(W, self.G @ W) - 2.0 * np.vdot(W, self.XtY) + self.yy
            return max(float(quad), 0.0) / self.n
        R = self.X @ W - self.Y
        return float(np.vdot(R, R)) / self.n

    def grad_at_zero(self):
        """Gradient at ``W = 0``, computed exactly as :meth:`grad` would."""
        return self.scale * (-self.XtY)

    def lipschitz(self):
        return LIPSCHITZ_INFLATION * lipschitz_constant(self.X, self.scale)
