import io
import json

import numpy as np
import pytest

from proxcourse.cohort import build_diagnosis_dataset, write_cohort
from proxcourse.diagnosis import DiagnosisModel, predict_course
from proxcourse.errors import ArgumentError
from proxcourse.prognosis import concordance_rate
from proxcourse.synth import REFERENCE_COUNTS, SynthConfig, expected_counts, generate_cohort

SMALL = dict(n_patients=80, n_features=12, support_size=4)


def _csv(cohort):
    buf = io.StringIO()
    write_cohort(cohort, buf)
    return buf.getvalue()


def _oracle(truth):
    d = truth.w.size
    return DiagnosisModel(truth.w, truth.bias, np.zeros(d), np.ones(d), 0.0, 0.0)


def test_noiseless_labels_are_separable_by_planted_weights():
    cfg = SynthConfig(p_flip=0.0, sigma_x=0.0, levels=None, seed=2, **SMALL)
    cohort, truth = generate_cohort(cfg)
    data = build_diagnosis_dataset(cohort, (1, cohort.time_points))
    margins = data.X @ truth.w + truth.bias
    assert np.all(data.y * margins > 0)
    assert set(np.unique(data.y)) == {-1.0, 1.0}


def test_oracle_classifier_has_perfect_concordance():
    cfg = SynthConfig(p_flip=0.0, sigma_x=0.0, levels=None, seed=5, **SMALL)
    cohort, truth = generate_cohort(cfg)
    f = _oracle(truth)
    pred, true = [], []
    for p in cohort.patients:
        for t, y in p.labels.items():
            pred.append(predict_course(f, p.observations[t])[0])
            true.append(y)
    assert concordance_rate(pred, true) == 1.0


def test_clean_labels_follow_latents_and_flips_are_rare():
    cfg = SynthConfig(p_flip=0.1, seed=1, **SMALL)
    cohort, truth = generate_cohort(cfg)
    flips = total = 0
    for p in cohort.patients:
        for t, y in p.labels.items():
            z = truth.latents[p.patient_id][t]
            assert truth.clean_labels[p.patient_id][t] == (1 if z @ truth.w + truth.bias > 0 else -1)
            flips += y != truth.clean_labels[p.patient_id][t]
            total += 1
    assert 0.03 < flips / total < 0.2


def test_same_seed_same_cohort_and_different_seed_differs():
    a = _csv(generate_cohort(SynthConfig(seed=9, **SMALL))[0])
    b = _csv(generate_cohort(SynthConfig(seed=9, **SMALL))[0])
    c = _csv(generate_cohort(SynthConfig(seed=10, **SMALL))[0])
    assert a == b and a != c


def test_ground_truth_shape_and_json(tmp_path):
    cohort, truth = generate_cohort(SynthConfig(seed=3, **SMALL))
    assert np.flatnonzero(truth.w).tolist() == truth.support.tolist()
    assert truth.support.size == 4
    np.testing.assert_array_equal(truth.A, 0.9 * np.eye(12))
    np.testing.assert_array_equal(np.sign(truth.b), np.sign(truth.w))
    truth.write_json(tmp_path / "gt.json")
    doc = json.loads((tmp_path / "gt.json").read_text())
    assert doc["support"] == truth.support.tolist() and doc["config"]["seed"] == 3


def test_default_config_matches_reference_scale():
    cfg = SynthConfig()
    assert (cfg.n_features, cfg.time_points, cfg.support_size) == (145, 6, 16)
    expected_n = expected_counts(cfg)[:4].sum()
    assert abs(expected_n - 2023) / 2023 < 0.02
    cohort, _ = generate_cohort(cfg)
    n = build_diagnosis_dataset(cohort, (1, 4)).n_samples
    assert abs(n - expected_n) < 4 * np.sqrt(expected_n)


def test_reference_shaped_counts_are_exact():
    cohort, _ = generate_cohort(SynthConfig.reference_shaped(n_features=5, support_size=2, seed=1))
    assert tuple(cohort.counts().values()) == REFERENCE_COUNTS


def test_dropout_gives_nonincreasing_counts_over_seeds():
    cfg = dict(n_patients=200, n_features=3, support_size=1, dropout=0.2)
    counts = np.array([list(generate_cohort(SynthConfig(seed=s, **cfg))[0].counts().values())
                       for s in range(50)])
    for row in counts:
        assert np.all(np.diff(row) <= 0)
    exp = expected_counts(SynthConfig(**cfg))
    # the mean over 50 seeds of a binomial count has stddev at most sqrt(n / 4 / 50)
    assert np.all(np.abs(counts.mean(axis=0) - exp) <= 4 * np.sqrt(200 / 4 / 50))


def test_quantized_values_stay_in_range():
    cohort, _ = generate_cohort(SynthConfig(levels=5, sigma_x=1.0, seed=4, **SMALL))
    values = np.concatenate([x for p in cohort.patients for x in p.observations.values()])
    assert values.min() >= 0 and values.max() <= 4
    assert np.all(values == np.rint(values))


def test_missing_rate_and_misspecified_mode():
    cohort, _ = generate_cohort(SynthConfig(missing_rate=0.2, misspecified=True, seed=6, **SMALL))
    values = np.concatenate([x for p in cohort.patients for x in p.observations.values()])
    assert 0.15 < np.isnan(values).mean() < 0.25


def test_margin_gap_excludes_boundary_baselines():
    cfg = SynthConfig(margin_gap=1.0, sp_fraction=0.5, seed=8, **SMALL)
    _, truth = generate_cohort(cfg)
    spread = cfg.sigma_x / np.sqrt(1 - cfg.rho ** 2)
    for zs in truth.latents.values():
        assert abs(zs[1] @ truth.w + truth.bias) >= spread * np.linalg.norm(truth.w)


@pytest.mark.parametrize("bad", [
    dict(support_size=0), dict(support_size=200), dict(p_flip=0.5), dict(levels=1),
    dict(dropout=1.0), dict(rho=1.0), dict(sp_fraction=0.0), dict(counts=(5, 6, 1, 1, 1, 1)),
    dict(counts=(5, 4)), dict(n_patients=0),
])
def test_invalid_configs(bad):
    with pytest.raises(ArgumentError):
        SynthConfig(**bad)
