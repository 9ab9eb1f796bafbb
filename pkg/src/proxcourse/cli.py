"""Command-line interface: ``gen``, ``fit``, ``evaluate``, ``prognose``.

Settings come from (lowest to highest precedence) built-in defaults, a
flat ``key = value`` config file given by ``--config``, and command-line
flags. Exit codes: 0 success, 2 bad arguments/config, 3 degenerate data,
4 solver failure, 5 composition mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import diagnosis, evolution
from .cohort import (
    MedianImputer,
    build_diagnosis_dataset,
    build_evolution_dataset,
    load_cohort,
    split_by_time,
    write_cohort,
)
from .errors import ArgumentError, DegenerateDataError, EmptyDatasetError, PipelineError
from .prognosis import FillPolicy, evaluate_teacher_forced, rollout_cohort, write_prognosis_report
from .prox import SolverConfig
from .selection import default_grid, monte_carlo_evaluate, vote_hyperparameters
from .synth import REFERENCE_COUNTS, SynthConfig, generate_cohort

log = logging.getLogger("proxcourse")


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# name -> (type, default, help); None default means required
OPTIONS = {
    "gen": {
        "out_dir": (str, None, "directory that receives cohort.csv and ground_truth.json"),
        "n_patients": (int, 600, "number of patients"),
        "time_points": (int, 6, "number of visits T"),
        "n_features": (int, 145, "answers per visit d"),
        "support_size": (int, 16, "planted support size"),
        "rho": (float, 0.9, "latent autoregression coefficient"),
        "sigma_x": (float, 0.3, "latent transition noise"),
        "drift": (float, 0.03, "per-step drift toward SP on planted coordinates"),
        "weight_low": (float, 0.5, "smallest planted |weight|"),
        "weight_high": (float, 1.5, "largest planted |weight|"),
        "sp_fraction": (float, 0.3, "baseline fraction of SP patients"),
        "separation": (float, 0.0, "baseline class separation (in latent spreads)"),
        "margin_gap": (float, 0.0, "minimum baseline |margin| (in margin spreads)"),
        "p_flip": (float, 0.02, "label flip probability"),
        "levels": (int, 7, "ordinal levels (0 disables quantization)"),
        "level_width": (float, 0.5, "latent width of one ordinal level"),
        "dropout": (float, 0.12, "per-visit dropout probability"),
        "reference_counts": (_bool, False, "use the fixed per-visit counts " + str(REFERENCE_COUNTS)),
        "missing_rate": (float, 0.0, "probability that an answer is missing"),
        "misspecified": (_bool, False, "add a mild nonlinearity to the dynamics"),
    },
    "fit": {
        "cohort": (str, None, "cohort CSV"),
        "out_dir": (str, None, "directory for models and reports"),
        "t_prime": (int, 4, "last learning time point T'"),
        "n_splits": (int, 100, "Monte Carlo splits"),
        "test_fraction": (float, 0.25, "held-out fraction per split"),
        "k_folds": (int, 3, "inner folds for the grid search"),
        "threshold": (float, 0.5, "selection-frequency threshold for the stable set"),
        "n_tau": (int, 20, "tau grid size"),
        "tau_ratio": (float, 1e-3, "smallest tau as a fraction of tau_max"),
        "mus": (_floats, (1e-3, 1e-2, 1e-1, 1.0), "comma-separated mu grid"),
        "n_tau_g": (int, 10, "tau_g grid size for the evolution model"),
        "max_iter": (int, 10000, "solver iteration budget"),
        "tol": (float, 1e-6, "solver relative-change tolerance"),
    },
    "evaluate": {
        "cohort": (str, None, "cohort CSV"),
        "model_dir": (str, None, "directory written by fit"),
        "out_dir": (str, None, "directory for the prognosis report"),
        "t_prime": (int, 4, "last learning time point T'"),
    },
    "prognose": {
        "cohort": (str, None, "cohort CSV"),
        "model_dir": (str, None, "directory written by fit"),
        "out_dir": (str, None, "directory for the rollout report"),
        "t_prime": (int, 4, "last learning time point T' (fixes the imputation medians)"),
        "horizon": (int, 5, "number of future steps"),
        "fill": (str, "hold_last", "fill policy for unselected answers: hold_last | learning_mean"),
    },
}


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    p = Path(path)
    if not p.is_file():
        raise ArgumentError(f"config file not found: {p}")
    out = {}
    for n, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"{p}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="proxcourse", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="flat key=value settings file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    parser.add_argument("--threads", type=int, default=None, help="worker processes (0 = auto)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in OPTIONS.items():
        sp = sub.add_parser(cmd)
        for name, (_, default, help_) in opts.items():
            extra = "" if default is None else f" (default {default})"
            sp.add_argument("--" + name.replace("_", "-"), dest=name, default=None, help=help_ + extra)
    return parser


def resolve(args):
    """Merge defaults, config file and flags into a plain settings dict."""
    file_cfg = read_config(args.config) if args.config else {}
    settings = {}
    for name, (conv, default, _) in OPTIONS[args.command].items():
        raw = getattr(args, name)
        if raw is None:
            raw = file_cfg.get(name, default)
        if raw is None:
            raise ArgumentError(f"missing required setting --{name.replace('_', '-')}")
        try:
            settings[name] = conv(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ArgumentError(f"bad value for {name}: {exc}") from None
    seed = args.seed if args.seed is not None else file_cfg.get("seed", 0)
    threads = args.threads if args.threads is not None else file_cfg.get("threads", 1)
    try:
        settings["seed"] = int(seed)
        settings["threads"] = int(threads)
    except ValueError as exc:
        raise ArgumentError(str(exc)) from None
    if settings["seed"] < 0 or settings["threads"] < 0:
        raise ArgumentError("seed and threads must be nonnegative")
    return settings


def _out_dir(path):
    p = Path(path)
    if not p.is_dir():
        raise ArgumentError(f"output directory does not exist: {p}")
    return p


def _input_file(path):
    p = Path(path)
    if not p.is_file():
        raise ArgumentError(f"input file does not exist: {p}")
    return p


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def cmd_gen(s):
    out = _out_dir(s["out_dir"])
    cfg = SynthConfig(
        n_patients=REFERENCE_COUNTS[0] if s["reference_counts"] else s["n_patients"],
        time_points=len(REFERENCE_COUNTS) if s["reference_counts"] else s["time_points"],
        n_features=s["n_features"],
        support_size=s["support_size"],
        rho=s["rho"],
        sigma_x=s["sigma_x"],
        drift=s["drift"],
        weight_range=(s["weight_low"], s["weight_high"]),
        sp_fraction=s["sp_fraction"],
        separation=s["separation"],
        margin_gap=s["margin_gap"],
        p_flip=s["p_flip"],
        levels=s["levels"] or None,
        level_width=s["level_width"],
        dropout=s["dropout"],
        counts=REFERENCE_COUNTS if s["reference_counts"] else None,
        missing_rate=s["missing_rate"],
        misspecified=s["misspecified"],
        seed=s["seed"],
    )
    cohort, truth = generate_cohort(cfg)
    with open(out / "cohort.csv", "w", newline="", encoding="utf-8") as fh:
        write_cohort(cohort, fh)
    truth.write_json(out / "ground_truth.json")
    log.info("wrote %d patients, counts %s", len(cohort.patients), cohort.counts())


def _learning_side(cohort, t_prime):
    learn, test = split_by_time(cohort, t_prime)
    return learn, test, MedianImputer.fit(learn)


def cmd_fit(s):
    out = _out_dir(s["out_dir"])
    cohort = load_cohort(str(_input_file(s["cohort"])))
    learn, _, imputer = _learning_side(cohort, s["t_prime"])
    solver = SolverConfig(max_iter=s["max_iter"], tol=s["tol"])
    data = build_diagnosis_dataset(learn, (1, s["t_prime"]), imputer)
    grid = default_grid(data, n_tau=s["n_tau"], ratio=s["tau_ratio"], mus=s["mus"])
    threads = s["threads"] or os.cpu_count() or 1
    log.info("diagnosis: N=%d, d=%d, %d splits", data.n_samples, data.X.shape[1], s["n_splits"])
    report = monte_carlo_evaluate(data, n_splits=s["n_splits"], test_fraction=s["test_fraction"],
                                  grid=grid, k_folds=s["k_folds"], master_seed=s["seed"],
                                  threshold=s["threshold"], config=solver, n_jobs=threads)
    tau, mu = vote_hyperparameters(report)
    f = diagnosis.fit_diagnosis(data, tau, mu, solver)

    outputs = sorted(set(report.stable_set().tolist()) | set(f.selected_indices.tolist()))
    if not outputs:
        raise DegenerateDataError("no variable was selected; cannot fit the evolution model")
    evo = build_evolution_dataset(learn, (1, s["t_prime"] - 1), outputs, imputer)
    taus_g = evolution.default_tau_grid(evo, n_tau=s["n_tau_g"])
    tau_g, _ = evolution.select_tau(evo, taus_g, k_folds=s["k_folds"],
                                    seed=s["seed"] % 2**32, config=solver)
    g = evolution.fit_evolution(evo, tau_g, solver)

    diagnosis.save_model(f, out / "diagnosis.json")
    evolution.save_model(g, out / "evolution.json")
    report.write_json(out / "resampling.json")
    report.write_frequencies_csv(out / "frequencies.csv")
    _write_json(out / "fit_summary.json", {
        "t_prime": s["t_prime"],
        "n_learning_rows": data.n_samples,
        "n_evolution_pairs": evo.n_samples,
        "tau": tau,
        "mu": mu,
        "tau_g": tau_g,
        "balanced_accuracy_mean": report.mean_accuracy,
        "balanced_accuracy_sample_std": report.std_accuracy,
        "stable_set": report.stable_set().tolist(),
        "diagnosis_support": f.selected_indices.tolist(),
        "evolution_outputs": outputs,
    })
    log.info("balanced accuracy %.3f, tau=%.4g mu=%.3g, %d variables selected",
             report.mean_accuracy, tau, mu, len(f.selected_indices))


def _load_models(model_dir):
    d = Path(model_dir)
    f = diagnosis.load_model(_input_file(d / "diagnosis.json"))
    g = evolution.load_model(_input_file(d / "evolution.json"))
    return f, g


def cmd_evaluate(s):
    out = _out_dir(s["out_dir"])
    cohort = load_cohort(str(_input_file(s["cohort"])))
    f, g = _load_models(s["model_dir"])
    if s["t_prime"] >= cohort.time_points:
        raise EmptyDatasetError(
            f"empty test set: T'={s['t_prime']} leaves no time points after it (T={cohort.time_points})"
        )
    _, test, imputer = _learning_side(cohort, s["t_prime"])
    result = evaluate_teacher_forced(f, g, test, imputer)
    write_prognosis_report(result, out / "prognosis.csv", out / "prognosis_summary.json")
    log.info("concordance %.3f over %d pairs", result.concordance, result.n_scored)


def cmd_prognose(s):
    out = _out_dir(s["out_dir"])
    if s["horizon"] < 1:
        raise ArgumentError(f"horizon must be >= 1, got {s['horizon']}")
    try:
        fill = FillPolicy(s["fill"])
    except ValueError:
        raise ArgumentError(f"unknown fill policy {s['fill']!r}") from None
    cohort = load_cohort(str(_input_file(s["cohort"])))
    f, g = _load_models(s["model_dir"])
    _, _, imputer = _learning_side(cohort, s["t_prime"])
    records, sp_fraction = rollout_cohort(f, g, cohort, imputer, s["horizon"], fill)
    with open(out / "rollout.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "last_observed", "step", "time_point", "predicted", "margin"])
        for pid, t_last, step, t, label, margin in records:
            w.writerow([pid, t_last, step, t, label, repr(margin)])
    _write_json(out / "rollout_summary.json", {
        "horizon": s["horizon"],
        "fill": fill.value,
        "n_patients": len(cohort.patients),
        "sp_fraction_per_step": sp_fraction,
    })


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "evaluate": cmd_evaluate, "prognose": cmd_prognose}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        settings = resolve(args)
        COMMANDS[args.command](settings)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
