"""Regularized learning of disease-course diagnosis and prognosis from longitudinal answers."""

from .cohort import (
    DiagnosisDataset,
    EvolutionDataset,
    LongitudinalCohort,
    MedianImputer,
    PatientSeries,
    build_diagnosis_dataset,
    build_evolution_dataset,
    load_cohort,
    split_by_time,
)
from .diagnosis import DiagnosisModel, fit_diagnosis, predict_course, selected_variables
from .evolution import EvolutionModel, fit_evolution, predict_next
from .prognosis import FillPolicy, concordance_rate, prognose_one_step, rollout
from .prox import (
    SolverConfig,
    SolverReport,
    fista_minimize,
    lipschitz_constant,
    prox_elastic_net,
    prox_row_group,
    soft_threshold,
)
from .selection import Grid, balanced_accuracy, default_grid, grid_search, monte_carlo_evaluate
from .synth import SynthConfig, generate_cohort

__version__ = "0.1.0"
