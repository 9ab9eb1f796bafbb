"""Synthetic longitudinal cohorts with a planted sparse ground truth.

Latent answers follow linear dynamics ``z' = A z + b + noise`` with
``A = rho * I``. The observed answers are the latents quantized onto
``levels`` ordinal steps, and the course label is the sign of
``z . w* + bias`` with occasional flips. The drift ``b`` pushes the
planted coordinates toward the SP side so RR -> SP transitions happen over
time. Patients leave the study at random, so ``n_t`` shrinks with ``t``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Optional

import numpy as np

from .cohort import RR, SP, LongitudinalCohort, PatientSeries
from .errors import ArgumentError

#: Per-time-point counts reproducing the reference cohort sizes
#: (N = 2023 learning rows for t <= 4, 194 test rows, 1292 evolution pairs
#: with t <= 3 and 62 test pairs).
REFERENCE_COUNTS = (731, 500, 420, 372, 132, 62)


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int = 600
    time_points: int = 6
    n_features: int = 145
    support_size: int = 16
    rho: float = 0.9
    sigma_x: float = 0.3
    drift: float = 0.03
    weight_range: tuple = (0.5, 1.5)
    sp_fraction: float = 0.3
    separation: float = 0.0
    margin_gap: float = 0.0
    p_flip: float = 0.02
    levels: Optional[int] = 7
    level_width: float = 0.5
    dropout: float = 0.12
    counts: Optional[tuple] = None
    missing_rate: float = 0.0
    misspecified: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 1 or self.time_points < 1 or self.n_features < 1:
            raise ArgumentError("n_patients, time_points, n_features must each be >= 1")
        if not 1 <= self.support_size <= self.n_features:
            raise ArgumentError("support_size must lie in 1..n_features")
        if not 0 <= self.p_flip < 0.5:
            raise ArgumentError("p_flip must lie in [0, 0.5)")
        if self.levels is not None and self.levels < 2:
            raise ArgumentError("levels must be >= 2 (or None to disable quantization)")
        if not 0 <= self.dropout < 1:
            raise ArgumentError("dropout must lie in [0, 1)")
        if not 0 <= self.missing_rate < 1:
            raise ArgumentError("missing_rate must lie in [0, 1)")
        if not 0 < self.sp_fraction < 1:
            raise ArgumentError("sp_fraction must lie in (0, 1)")
        if self.separation < 0 or self.margin_gap < 0:
            raise ArgumentError("separation and margin_gap must be >= 0")
        if self.sigma_x < 0 or self.level_width <= 0:
            raise ArgumentError("sigma_x must be >= 0 and level_width > 0")
        if not 0 <= abs(self.rho) < 1:
            raise ArgumentError("|rho| must be < 1")
        if self.counts is not None:
            c = tuple(self.counts)
            if len(c) != self.time_points:
                raise ArgumentError("counts must have one entry per time point")
            if c[0] > self.n_patients or any(b > a for a, b in zip(c, c[1:])) or c[-1] < 0:
                raise ArgumentError("counts must be nonincreasing and start at most n_patients")

    @classmethod
    def reference_shaped(cls, **overrides):
        """Config whose counts match the reference cohort sizes exactly."""
        base = dict(n_patients=REFERENCE_COUNTS[0], counts=REFERENCE_COUNTS)
        base.update(overrides)
        return cls(**base)


@dataclass
class GroundTruth:
    w: np.ndarray
    bias: float
    support: np.ndarray
    A: np.ndarray
    b: np.ndarray
    latents: dict = field(repr=False)
    clean_labels: dict = field(repr=False)
    config: Optional[SynthConfig] = None

    def to_dict(self):
        return {
            "config": None if self.config is None else asdict(self.config),
            "w": self.w.tolist(),
            "bias": self.bias,
            "support": self.support.tolist(),
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "latents": {pid: {str(t): z.tolist() for t, z in zs.items()}
                        for pid, zs in self.latents.items()},
            "clean_labels": {pid: {str(t): y for t, y in ys.items()}
                             for pid, ys in self.clean_labels.items()},
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")


def _quantize(z, cfg):
    if cfg.levels is None:
        return z
    centre = (cfg.levels - 1) / 2
    return np.clip(np.rint(z / cfg.level_width + centre), 0, cfg.levels - 1)


def _margin_quantile(p, q, sep):
    """Quantile ``p`` of the mixture ``q N(sep, 1) + (1 - q) N(-sep, 1)``."""
    if sep == 0:
        return NormalDist().inv_cdf(p)
    hi_, lo_ = NormalDist(sep, 1.0), NormalDist(-sep, 1.0)
    a, b = -sep - 10.0, sep + 10.0
    for _ in range(200):
        c = 0.5 * (a + b)
        if q * hi_.cdf(c) + (1 - q) * lo_.cdf(c) < p:
            a = c
        else:
            b = c
    return 0.5 * (a + b)


def generate_cohort(cfg: SynthConfig):
    """Return ``(cohort, ground_truth)``; fully determined by ``cfg.seed``."""
    ss = np.random.SeedSequence(cfg.seed)
    rng_model, rng_drop = (np.random.default_rng(s) for s in ss.spawn(2))
    d, T = cfg.n_features, cfg.time_points

    support = np.sort(rng_model.choice(d, cfg.support_size, replace=False))
    w = np.zeros(d)
    lo, hi = cfg.weight_range
    w[support] = rng_model.uniform(lo, hi, cfg.support_size) * rng_model.choice([-1.0, 1.0], cfg.support_size)
    A = cfg.rho * np.eye(d)
    b = cfg.drift * np.sign(w)
    # start at the stationary spread so the margin distribution is stable apart from drift
    spread = cfg.sigma_x / math.sqrt(1 - cfg.rho ** 2) if cfg.sigma_x > 0 else 1.0
    norm_w = float(np.linalg.norm(w))
    w_dir = w / norm_w
    bias = -_margin_quantile(1 - cfg.sp_fraction, cfg.sp_fraction, cfg.separation) * spread * norm_w

    # number of visits per patient
    if cfg.counts is not None:
        n_visits = np.zeros(cfg.n_patients, dtype=int)
        order = rng_drop.permutation(cfg.n_patients)
        for t, n_t in enumerate(cfg.counts, start=1):
            n_visits[order[:n_t]] = t
    else:
        stay = rng_drop.random((cfg.n_patients, T - 1)) >= cfg.dropout
        n_visits = 1 + np.cumprod(stay, axis=1).sum(axis=1)

    width = len(str(cfg.n_patients))
    patients, latents, clean = [], {}, {}
    child_seeds = np.random.SeedSequence(cfg.seed, spawn_key=(7,)).spawn(cfg.n_patients)
    for i in range(cfg.n_patients):
        if n_visits[i] == 0:
            continue
        rng = np.random.default_rng(child_seeds[i])
        pid = f"P{i + 1:0{width}d}"
        while True:
            z = rng.normal(0.0, spread, d)
            if cfg.separation > 0:
                group = 1.0 if rng.random() < cfg.sp_fraction else -1.0
                z += group * cfg.separation * spread * w_dir
            # baseline states too close to the decision boundary are redrawn
            if abs(z @ w + bias) >= cfg.margin_gap * spread * norm_w:
                break
        obs, labels, zs, ys = {}, {}, {}, {}
        for t in range(1, n_visits[i] + 1):
            if t > 1:
                step = A @ z + b + cfg.sigma_x * rng.standard_normal(d)
                if cfg.misspecified:
                    step += 0.1 * np.sin(2.0 * z)
                z = step
            y_clean = SP if z @ w + bias > 0 else RR
            y = -y_clean if rng.random() < cfg.p_flip else y_clean
            x = _quantize(z, cfg).astype(float)
            if cfg.missing_rate > 0:
                x[rng.random(d) < cfg.missing_rate] = np.nan
            obs[t], labels[t], zs[t], ys[t] = x, y, z.copy(), y_clean
        patients.append(PatientSeries(pid, obs, labels))
        latents[pid], clean[pid] = zs, ys

    names = tuple(f"q{j + 1:03d}" for j in range(d))
    cohort = LongitudinalCohort(tuple(patients), d, T, names)
    truth = GroundTruth(w, bias, support, A, b, latents, clean, cfg)
    return cohort, truth


def expected_counts(cfg: SynthConfig):
    """Expected ``n_t`` under the configured dropout (or the fixed counts)."""
    if cfg.counts is not None:
        return np.asarray(cfg.counts, dtype=float)
    return cfg.n_patients * (1 - cfg.dropout) ** np.arange(cfg.time_points)
