"""Proximal operators, Lipschitz estimation and the FISTA iteration.

All solvers in the package minimize composite objectives

    F(W) = V(W) + R(W)

where ``V`` is a smooth quadratic data term and ``R`` is a penalty with a
cheap proximal map. The loop here knows nothing about either: it takes a
gradient callback and a prox callback and performs accelerated
forward-backward steps with a fixed step ``1/L``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ArgumentError, SolverError

#: Safety factor applied to power-iteration estimates before use as a step bound.
LIPSCHITZ_INFLATION = 1.01

MOMENTUM_KINDS = ("fista", "monotone", "none")


class DegenerateProblemWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget and stopping rule for :func:`fista_minimize`.

    ``momentum`` selects plain FISTA, the monotone variant (objective never
    increases; needs an objective callback) or ``"none"`` for ISTA.
    """

    max_iter: int = 10000
    tol: float = 1e-6
    momentum: str = "fista"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ArgumentError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ArgumentError(f"tol must be > 0, got {self.tol}")
        if self.momentum not in MOMENTUM_KINDS:
            raise ArgumentError(f"unknown momentum {self.momentum!r}")


@dataclass
class SolverReport:
    iterations_run: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    final_objective: Optional[float] = None


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family plus nonnegative weights.

    ``kind`` is ``"elastic_net"`` (uses ``tau`` and ``mu``) or
    ``"row_group_l21"`` (uses ``tau`` only).
    """

    kind: str
    tau: float
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("elastic_net", "row_group_l21"):
            raise ArgumentError(f"unknown penalty kind {self.kind!r}")
        if self.tau < 0 or self.mu < 0:
            raise ArgumentError("penalty parameters must be nonnegative")
        if self.kind == "row_group_l21" and self.mu != 0:
            raise ArgumentError("row_group_l21 takes no mu")

    def value(self, W):
        W = np.asarray(W)
        if self.kind == "elastic_net":
            return self.tau * np.abs(W).sum() + self.mu * np.vdot(W, W)
        return self.tau * np.linalg.norm(W, axis=-1).sum()

    def prox(self, V, step):
        if self.kind == "elastic_net":
            return prox_elastic_net(V, step, self.tau, self.mu)
        return prox_row_group(V, step, self.tau)


def soft_threshold(v, theta):
    """Elementwise ``sign(v) * max(|v| - theta, 0)``.

    Entries with ``|v| <= theta`` come out as exact (positive) zeros.
    """
    if theta < 0:
        raise ArgumentError(f"threshold must be nonnegative, got {theta}")
    v = np.asarray(v, dtype=float)
    # + 0.0 turns -0.0 into 0.0
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0) + 0.0


def prox_elastic_net(v, step, tau, mu):
    """Prox of ``step * (tau*||w||_1 + mu*||w||_2^2)``."""
    if not step > 0:
        raise ArgumentError(f"step must be positive, got {step}")
    if tau < 0 or mu < 0:
        raise ArgumentError("tau and mu must be nonnegative")
    return soft_threshold(v, step * tau) / (1.0 + 2.0 * step * mu)


def prox_row_group(V, step, tau):
    """Prox of ``step * tau * sum_rows ||row||_2`` (block soft thresholding).

    Rows whose norm does not exceed ``step * tau`` are set to exact zeros.
    """
    if not step > 0:
        raise ArgumentError(f"step must be positive, got {step}")
    if tau < 0:
        raise ArgumentError(f"tau must be nonnegative, got {tau}")
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
        squeeze = True
    else:
        squeeze = False
    thresh = step * tau
    norms = np.linalg.norm(V, axis=1)
    out = np.zeros_like(V)
    # ||step * g|| may round a few ulps above step * ||g||; such rows are on the boundary
    keep = norms > thresh * (1 + 4 * np.finfo(float).eps)
    if np.any(keep):
        scale = 1.0 - thresh / norms[keep]
        out[keep] = V[keep] * scale[:, None]
    return out[:, 0] if squeeze else out


def lipschitz_constant(X, loss_scale, tol=1e-6, max_iter=10000):
    """Return ``loss_scale * sigma_max(X^T X)`` via power iteration.

    The iteration runs on whichever of ``X^T X`` / ``X X^T`` is smaller
    and stops once the Rayleigh quotient changes by less than ``tol``
    relative, after which a residual bound is checked as well.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ArgumentError("X must be nonempty")
    if not np.any(X):
        warnings.warn("all-zero design: Lipschitz constant is 0", DegenerateProblemWarning,
                      stacklevel=2)
        return 0.0
    n, d = X.shape
    if d <= n:
        def apply(v):
            return X.T @ (X @ v)
        dim = d
    else:
        def apply(v):
            return X @ (X.T @ v)
        dim = n

    # fixed start vector keeps the estimate deterministic
    v = np.random.default_rng(0).standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        Av = apply(v)
        lam_new = float(v @ Av)
        nrm = np.linalg.norm(Av)
        if nrm == 0.0:
            # start vector in the null space; restart along a basis vector
            v = np.zeros(dim)
            v[int(np.argmax(np.linalg.norm(X, axis=0 if d <= n else 1)))] = 1.0
            continue
        resid = np.linalg.norm(Av - lam_new * v)
        v = Av / nrm
        # eigenvalue error of the Rayleigh quotient is O(resid^2 / gap)
        if abs(lam_new - lam) <= tol * 1e-3 * lam_new and resid <= math.sqrt(tol) * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return loss_scale * lam


def fista_minimize(
    grad: Callable[[np.ndarray], np.ndarray],
    prox: Callable[[np.ndarray, float], np.ndarray],
    L: float,
    W0,
    config: SolverConfig = SolverConfig(),
    objective: Optional[Callable[[np.ndarray], float]] = None,
):
    """Accelerated proximal gradient with fixed step ``1/L``.

    ``prox(V, step)`` must return the proximal point of ``step * R`` at ``V``.
    When ``objective`` is given its value after every iteration is recorded
    in the report and used to detect divergence.

    Returns ``(W, report)``.
    """
    if not L > 0:
        raise ArgumentError(f"Lipschitz bound must be positive, got {L}")
    if config.momentum == "monotone" and objective is None:
        raise ArgumentError("monotone momentum needs an objective callback")
    step = 1.0 / L

    W = np.array(W0, dtype=float, copy=True)
    W_prev = W
    Y = W
    t = 1.0
    trace = []
    f0 = objective(W) if objective is not None else None
    f_cur = f0
    converged = False

    k = 0
    for k in range(1, config.max_iter + 1):
        Z = prox(Y - step * grad(Y), step)
        if not np.all(np.isfinite(Z)):
            raise SolverError(f"non-finite iterate at iteration {k} with step size {step:g}")

        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if config.momentum == "monotone":
            f_z = objective(Z)
            if f_z <= f_cur:
                W_new, f_cur = Z, f_z
            else:
                W_new = W
            Y = W_new + (t / t_next) * (Z - W_new) + ((t - 1.0) / t_next) * (W_new - W)
        else:
            W_new = Z
            if config.momentum == "fista":
                Y = W_new + ((t - 1.0) / t_next) * (W_new - W)
            else:
                Y = W_new
            if objective is not None:
                f_cur = objective(W_new)
        t = t_next

        if objective is not None:
            trace.append(float(f_cur))
            if not math.isfinite(f_cur) or (f_cur > f0 and f_cur > 10.0 * abs(f0) + 1e-12):
                raise SolverError(
                    f"objective diverged at iteration {k} ({f_cur:g} vs initial {f0:g}); "
                    f"step size {step:g} is too large"
                )

        W_prev, W = W, W_new
        # monotone variant may hold W fixed; measure the prox point instead
        moved = Z - W_prev if config.momentum == "monotone" else W - W_prev
        if np.linalg.norm(moved) / max(1.0, np.linalg.norm(W_prev)) < config.tol:
            converged = True
            break

    report = SolverReport(
        iterations_run=k,
        converged=converged,
        objective_trace=trace,
        final_objective=trace[-1] if trace else None,
    )
    return W, report
