"""Monte Carlo resampling with nested grid search for the course classifier.

Each outer split holds out a stratified test fraction, picks ``(tau, mu)``
by stratified k-fold balanced accuracy on the remainder, refits there and
scores the held-out part. Per-split results are aggregated into accuracy
statistics and per-variable selection frequencies.

Seeds for split ``s`` come from ``SeedSequence(master_seed, spawn_key=(s, ...))``
so a split's randomness does not depend on which worker runs it or in what
order; results are always reduced in split-index order.
"""
from __future__ import annotations

import csv
import json
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold, StratifiedShuffleSplit

from .diagnosis import _Problem
from .errors import ArgumentError, DegenerateDataError, PipelineError, StratificationError
from .prox import SolverConfig

DEFAULT_MUS = (1e-3, 1e-2, 1e-1, 1.0)


def balanced_accuracy(y_true, y_pred):
    """Mean of sensitivity (class +1) and specificity (class -1)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise ArgumentError("y_true and y_pred must be nonempty 1-D sequences of equal length")
    pos = y_true == 1
    neg = y_true == -1
    if not pos.any() or not neg.any():
        raise DegenerateDataError("balanced accuracy is undefined when y_true has a single class")
    sensitivity = np.count_nonzero(y_pred[pos] == 1) / np.count_nonzero(pos)
    specificity = np.count_nonzero(y_pred[neg] == -1) / np.count_nonzero(neg)
    return (sensitivity + specificity) / 2


@dataclass(frozen=True)
class Grid:
    taus: tuple
    mus: tuple

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        if taus.size == 0 or len(self.mus) == 0:
            raise ArgumentError("grid must be nonempty")
        if np.any(taus <= 0) or any(m <= 0 for m in self.mus):
            raise ArgumentError("grid values must be positive")
        if np.any(np.diff(taus) >= 0):
            raise ArgumentError("tau values must be strictly decreasing")


def default_grid(data, n_tau=20, ratio=1e-3, mus: Sequence[float] = DEFAULT_MUS) -> Grid:
    """``n_tau`` geometric points from ``tau_max`` down to ``ratio * tau_max``."""
    top = _Problem(data.X, data.y).tau_max()
    if top == 0:
        raise DegenerateDataError("labels are uncorrelated with every feature (tau_max = 0)")
    return Grid(tuple(np.geomspace(top, top * ratio, n_tau).tolist()), tuple(float(m) for m in mus))


def _seed(master_seed, *key):
    ss = np.random.SeedSequence(master_seed, spawn_key=key)
    return int(ss.generate_state(1)[0])


def _check_fold(y, idx, what):
    classes = np.unique(y[idx])
    if classes.size < 2:
        raise StratificationError(f"{what} lost a class (only {classes.tolist()} present)")


def _fit_grid(X, y, grid: Grid, config):
    """Yield ``(i_mu, i_tau, model)`` over the whole grid, warm-starting along tau."""
    prob = _Problem(X, y)
    for i_mu, mu in enumerate(grid.mus):
        w = None
        for i_tau, tau in enumerate(grid.taus):
            w, _ = prob.solve(tau, mu, config, w0=w)
            yield i_mu, i_tau, prob.model(w, tau, mu)


def grid_search(data, grid: Grid, k_folds=3, seed=0, config: SolverConfig = SolverConfig()):
    """Return ``(tau, mu, cv_table)`` maximizing mean fold balanced accuracy.

    ``cv_table[i_mu, i_tau]`` holds the mean over folds. Exact ties go to the
    larger tau, then the larger mu.
    """
    if k_folds < 2:
        raise ArgumentError("k_folds must be >= 2")
    X, y = data.X, data.y
    counts = Counter(y.tolist())
    if len(counts) < 2 or min(counts.values()) < k_folds:
        raise StratificationError(
            f"cannot stratify {dict(counts)} into {k_folds} folds with both classes in each"
        )
    table = np.zeros((len(grid.mus), len(grid.taus)))
    skf = StratifiedKFold(n_splits=k_folds, shuffle=True, random_state=seed)
    for train, val in skf.split(X, y):
        _check_fold(y, train, "training fold")
        _check_fold(y, val, "validation fold")
        for i_mu, i_tau, model in _fit_grid(X[train], y[train], grid, config):
            table[i_mu, i_tau] += balanced_accuracy(y[val], model.predict(X[val]))
    table /= k_folds
    cells = [(table[i, j], grid.taus[j], grid.mus[i])
             for i in range(len(grid.mus)) for j in range(len(grid.taus))]
    _, tau, mu = max(cells)
    return tau, mu, table


@dataclass
class SplitRecord:
    index: int
    balanced_accuracy: float
    tau: float
    mu: float
    selected: list
    weights: list


@dataclass
class ResamplingReport:
    n_splits: int
    test_fraction: float
    k_folds: int
    master_seed: int
    threshold: float
    splits: list
    feature_names: tuple = ()
    grid: Optional[Grid] = None

    @property
    def accuracies(self):
        return np.array([s.balanced_accuracy for s in self.splits])

    @property
    def mean_accuracy(self):
        return float(np.mean(self.accuracies))

    @property
    def std_accuracy(self):
        """Sample stddev (n-1); ``None`` for a single split."""
        if self.n_splits < 2:
            return None
        return float(np.std(self.accuracies, ddof=1))

    @property
    def n_features(self):
        return len(self.splits[0].weights)

    @property
    def frequencies(self):
        counts = np.zeros(self.n_features)
        for s in self.splits:
            counts[s.selected] += 1
        return counts / self.n_splits

    @property
    def mean_weights(self):
        return np.mean([s.weights for s in self.splits], axis=0)

    def stable_set(self, threshold=None):
        thr = self.threshold if threshold is None else threshold
        return np.flatnonzero(self.frequencies >= thr)

    def to_dict(self):
        return {
            "n_splits": self.n_splits,
            "test_fraction": self.test_fraction,
            "k_folds": self.k_folds,
            "master_seed": self.master_seed,
            "balanced_accuracy": {"mean": self.mean_accuracy, "sample_std": self.std_accuracy},
            "threshold": self.threshold,
            "stable_set": self.stable_set().tolist(),
            "frequencies": self.frequencies.tolist(),
            "feature_names": list(self.feature_names),
            "grid": None if self.grid is None else {"taus": list(self.grid.taus),
                                                    "mus": list(self.grid.mus)},
            "splits": [
                {"index": s.index, "balanced_accuracy": s.balanced_accuracy, "tau": s.tau,
                 "mu": s.mu, "selected": s.selected, "weights": s.weights}
                for s in self.splits
            ],
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    def write_frequencies_csv(self, path):
        names = self.feature_names or tuple(f"x{j}" for j in range(self.n_features))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature_name", "frequency", "mean_weight"])
            for name, f, mw in zip(names, self.frequencies, self.mean_weights):
                w.writerow([name, repr(float(f)), repr(float(mw))])


def vote_hyperparameters(report: ResamplingReport):
    """Most frequently chosen ``(tau, mu)``; ties go to larger tau, then larger mu."""
    votes = Counter((s.tau, s.mu) for s in report.splits)
    (tau, mu), _ = max(votes.items(), key=lambda kv: (kv[1], kv[0][0], kv[0][1]))
    return tau, mu


_WORKER_STATE: dict = {}


def _init_worker(state):
    _WORKER_STATE.clear()
    _WORKER_STATE.update(state)


def _run_split(s):
    st = _WORKER_STATE
    X, y, grid, config = st["X"], st["y"], st["grid"], st["config"]
    try:
        sss = StratifiedShuffleSplit(n_splits=1, test_size=st["test_fraction"],
                                     random_state=_seed(st["master_seed"], s, 0))
        inner, outer = next(sss.split(X, y))
        _check_fold(y, outer, "outer test set")
        inner_data = _Rows(X[inner], y[inner])
        tau, mu, _ = grid_search(inner_data, grid, st["k_folds"],
                                 _seed(st["master_seed"], s, 1), config)
        prob = _Problem(inner_data.X, inner_data.y)
        w, _ = prob.solve(tau, mu, config)
        model = prob.model(w, tau, mu)
        ba = balanced_accuracy(y[outer], model.predict(X[outer]))
    except PipelineError as exc:
        raise type(exc)(f"split {s}: {exc}") from exc
    except ValueError as exc:
        raise StratificationError(f"split {s}: {exc}") from exc
    return SplitRecord(s, float(ba), float(tau), float(mu),
                       model.selected_indices.tolist(), model.w.tolist())


@dataclass
class _Rows:
    X: np.ndarray
    y: np.ndarray


def monte_carlo_evaluate(data, n_splits=100, test_fraction=0.25, grid: Optional[Grid] = None,
                         k_folds=3, master_seed=0, threshold=0.5,
                         config: SolverConfig = SolverConfig(), n_jobs=1) -> ResamplingReport:
    """Run ``n_splits`` resampling rounds; ``n_jobs > 1`` spreads them over processes."""
    if n_splits < 1:
        raise ArgumentError("n_splits must be >= 1")
    if not 0 < test_fraction < 1:
        raise ArgumentError("test_fraction must lie in (0, 1)")
    if not 0 <= threshold <= 1:
        raise ArgumentError("threshold must lie in [0, 1]")
    if grid is None:
        grid = default_grid(data)
    state = dict(X=np.asarray(data.X, dtype=float), y=np.asarray(data.y, dtype=float), grid=grid,
                 config=config, test_fraction=test_fraction, k_folds=k_folds,
                 master_seed=master_seed)
    if n_jobs <= 1 or n_splits == 1:
        _init_worker(state)
        records = [_run_split(s) for s in range(n_splits)]
    else:
        with ProcessPoolExecutor(max_workers=min(n_jobs, n_splits), initializer=_init_worker,
                                 initargs=(state,)) as pool:
            records = list(pool.map(_run_split, range(n_splits)))
    records.sort(key=lambda r: r.index)
    return ResamplingReport(n_splits, test_fraction, k_folds, master_seed, threshold, records,
                            tuple(getattr(data, "feature_names", ())), grid)
