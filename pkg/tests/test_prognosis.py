import numpy as np
import pytest

from proxcourse.cohort import (
    LongitudinalCohort,
    MedianImputer,
    PatientSeries,
    build_diagnosis_dataset,
    build_evolution_dataset,
)
from proxcourse.diagnosis import DiagnosisModel, fit_diagnosis, predict_course, tau_max
from proxcourse.errors import ArgumentError, CompositionError, EmptyDatasetError
from proxcourse.evolution import EvolutionModel, fit_evolution, tau_max_evolution
from proxcourse.prognosis import (
    FillPolicy,
    concordance_rate,
    evaluate_teacher_forced,
    prognose_one_step,
    rollout,
    rollout_cohort,
    write_prognosis_report,
)
from proxcourse.synth import SynthConfig, generate_cohort

D = 6


def _f(w, intercept=0.0, means=None, stds=None):
    w = np.asarray(w, float)
    means = np.zeros_like(w) if means is None else np.asarray(means, float)
    stds = np.ones_like(w) if stds is None else np.asarray(stds, float)
    return DiagnosisModel(w, intercept, means, stds, 0.1, 0.1)


def _identity_g(sel, d=D):
    W = np.zeros((d, len(sel)))
    W[list(sel), range(len(sel))] = 1.0
    return EvolutionModel(W, np.zeros(len(sel)), np.zeros(d), np.ones(d), tuple(sel), 0.0)


def _drift_g(sel, step, d=D):
    g = _identity_g(sel, d)
    return EvolutionModel(g.W, np.full(len(sel), step), g.means, g.stddevs, g.selected_indices, 0.0)


F = _f([0.5, 0, -1.0, 0, 0, 0], 0.1, means=[1, 2, 3, 4, 5, 6], stds=[2, 1, 0.5, 1, 1, 1])


def test_identity_composition_equals_plain_classifier(rng):
    g = _identity_g([0, 2, 5])
    for x in rng.normal(size=(100, D)) * 3:
        label, margin, x_hat = prognose_one_step(F, g, x)
        assert (label, margin) == predict_course(F, x)
        np.testing.assert_array_equal(x_hat, x[[0, 2, 5]])


def test_null_classifier_predicts_rr(rng):
    g = _drift_g([0, 1], 10.0)
    for x in rng.normal(size=(10, D)):
        assert prognose_one_step(_f(np.zeros(D)), g, x)[0] == -1


def test_composition_mismatch_fails_fast():
    g = _identity_g([0, 1])
    with pytest.raises(CompositionError, match=r"\[2\]"):
        prognose_one_step(F, g, np.zeros(D))
    with pytest.raises(CompositionError):
        rollout(F, g, np.zeros(D), 3)
    with pytest.raises(CompositionError):
        prognose_one_step(_f(np.ones(D + 1)), _identity_g([0], D + 1), np.zeros(D))
    with pytest.raises(CompositionError):
        prognose_one_step(_f([1.0, 0, 0]), _identity_g([0], 4), np.zeros(3))


def test_concordance_examples():
    a = [1, -1, -1, 1]
    assert concordance_rate(a, a) == 1.0
    assert concordance_rate(a, [1, -1, 1, 1]) == 0.75
    assert concordance_rate(a, [-v for v in a]) == 0.0
    with pytest.raises(ArgumentError):
        concordance_rate([1], [1, 1])
    with pytest.raises(ArgumentError):
        concordance_rate([], [])


def test_concordance_is_symmetric(rng):
    for _ in range(50):
        a, b = rng.choice([-1, 1], size=(2, 17))
        assert concordance_rate(a, b) == concordance_rate(b, a)


def test_rollout_base_case_is_one_step(rng):
    g = _drift_g([0, 2], 0.3)
    for x in rng.normal(size=(20, D)):
        label, margin, _ = prognose_one_step(F, g, x)
        assert rollout(F, g, x, 1) == [(1, label, margin)]


def test_rollout_identity_is_fixed_point(rng):
    g = _identity_g([0, 2])
    for x in rng.normal(size=(10, D)):
        label, margin = predict_course(F, x)
        assert rollout(F, g, x, 5) == [(k, label, margin) for k in range(1, 6)]


def test_rollout_learning_mean_fill_uses_g_means():
    f = _f([1.0, 0, 0, 0, 0, 0])
    W = np.zeros((D, 1))
    W[5, 0] = 1.0  # next q0 = (q5 - 2) + 1
    g = EvolutionModel(W, np.array([1.0]), np.full(D, 2.0), np.ones(D), (0,), 0.0)
    x = np.array([0, 0, 0, 0, 0, -7.0])
    # step 1 reads the observed q5; afterwards LEARNING_MEAN holds q5 at its mean 2
    assert rollout(f, g, x, 2, FillPolicy.LEARNING_MEAN) == [(1, -1, -8.0), (2, 1, 1.0)]
    assert rollout(f, g, x, 2, "hold_last") == [(1, -1, -8.0), (2, -1, -8.0)]


def test_rollout_drift_is_monotone():
    g = _drift_g([0, 2], 0.5)
    margins = [m for _, _, m in rollout(F, g, np.zeros(D), 8)]
    # f weighs coordinate 0 by +0.25 and coordinate 2 by -2 per unit
    np.testing.assert_allclose(np.diff(margins), 0.5 * (0.25 - 2.0))


def test_rollout_rejects_bad_horizon():
    with pytest.raises(ArgumentError):
        rollout(F, _identity_g([0, 2]), np.zeros(D), 0)


def test_margin_unchanged_by_unused_coordinate(rng):
    g = _drift_g([0, 2], 0.2)
    for x in rng.normal(size=(10, D)):
        y = x.copy()
        y[3] += 1e-3
        assert prognose_one_step(F, g, x)[1] == prognose_one_step(F, g, y)[1]


def test_rollout_is_deterministic(rng):
    g = _drift_g([0, 2], 0.1)
    x = rng.normal(size=D)
    assert rollout(F, g, x, 6) == rollout(F, g, x.copy(), 6)


def _tiny_test_cohort():
    obs = lambda *v: np.array(v, float)  # noqa: E731
    patients = (
        PatientSeries("b", {5: obs(3, 0), 6: obs(1, 0)}, {5: 1, 6: -1}),
        PatientSeries("a", {5: obs(-2, 0), 6: obs(np.nan, 0)}, {6: 1}),
        PatientSeries("c", {6: obs(5, 0)}, {6: 1}),
    )
    return LongitudinalCohort(patients, 2, 6, ("q1", "q2"))


def test_teacher_forced_pairs_and_report(tmp_path):
    f = _f([1.0, 0.0])
    g = _identity_g([0], 2)
    cohort = _tiny_test_cohort()
    result = evaluate_teacher_forced(f, g, cohort, MedianImputer(np.array([0.0, 0.0])))
    assert [(r.patient_id, r.time_point) for r in result.records] == [("a", 6), ("b", 6)]
    assert [r.predicted for r in result.records] == [-1, 1]
    assert result.concordance == 0.0 and result.n_scored == 2
    write_prognosis_report(result, tmp_path / "p.csv", tmp_path / "p.json")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "patient_id,time_point,predicted,margin,clinician_label"
    assert lines[1] == "a,6,-1,-2.0,1"
    assert '"n_scored": 2' in (tmp_path / "p.json").read_text()


def test_teacher_forced_without_pairs_is_empty():
    cohort = LongitudinalCohort((PatientSeries("a", {5: np.zeros(2)}, {5: 1}),), 2, 6, ("q1", "q2"))
    with pytest.raises(EmptyDatasetError):
        evaluate_teacher_forced(_f([1.0, 0.0]), _identity_g([0], 2), cohort,
                                MedianImputer(np.zeros(2)))


def test_rollout_cohort_records_and_imputation():
    cohort = _tiny_test_cohort()
    records, sp = rollout_cohort(_f([1.0, 0.0]), _drift_g([0], 1.0, 2), cohort,
                                 MedianImputer(np.array([4.0, 0.0])), 2)
    assert [r[:4] for r in records] == [("a", 6, 1, 7), ("a", 6, 2, 8), ("b", 6, 1, 7),
                                        ("b", 6, 2, 8), ("c", 6, 1, 7), ("c", 6, 2, 8)]
    assert records[0][5] == 5.0  # missing value imputed to 4, then one drift step
    assert sp == [1.0, 1.0]


@pytest.mark.slow
def test_planted_drift_raises_sp_fraction():
    cfg = SynthConfig(n_patients=300, n_features=30, support_size=5, drift=0.05, seed=4)
    cohort, _ = generate_cohort(cfg)
    diag = build_diagnosis_dataset(cohort, (1, 6))
    f = fit_diagnosis(diag, 0.2 * tau_max(diag.X, diag.y), 0.01)
    evo = build_evolution_dataset(cohort, (1, 5), f.selected_indices)
    g = fit_evolution(evo, 0.01 * tau_max_evolution(evo.X, evo.Y))
    _, sp = rollout_cohort(f, g, cohort, MedianImputer.fit(cohort), 5)
    assert np.all(np.diff(sp) >= 0) and sp[-1] > sp[0]
