"""Command-line entry point: ``fairreg <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 oracle check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (apply_scaler, fit_scaler, generate_synthetic, holdout_split, label_spd,
                       load_adult, load_splits, save_splits)
from .metrics import metric_columns
from .oracle import random_scm, verify_identities
from .pipeline import LOSSES, MODELS, Experiment, ExperimentConfig
from .propensity import C_GRID, fit_propensity, load_propensity, save_propensity
from .schedule import fmt, lambda_grid, write_trace
from .trainers import GBTConfig, LinearModel, save_ensemble, save_linear

logger = logging.getLogger("fairreg")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_ORACLE = 0, 1, 2, 3
ORACLE_TOL = 1e-8
PROPENSITY_FILE = "propensity.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def _lambda(text):
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"lambda must lie in [0, 1), got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _lambda_list(text):
    vals = [_lambda(t) for t in text.split(",") if t.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("empty lambda list")
    return vals


# -- outputs ------------------------------------------------------------------

def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, command: str, params: dict) -> None:
    payload = {"command": command, "version": __version__, **params}
    (out / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _write_rows(path: Path, rows, columns) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: fmt(row.get(k, math.nan)) for k in columns})


def _report_columns(config: ExperimentConfig, feature_names) -> list[str]:
    cols = metric_columns(config.n1, config.n2)
    if config.model == "linear":
        cols += [f"w:{n}" for n in feature_names] + ["w:intercept"]
    return cols


def _save_model(model, path: Path) -> None:
    if isinstance(model, LinearModel):
        save_linear(model, path)
    else:
        save_ensemble(model, path)


def _lambda_tag(lam: float) -> str:
    return f"{lam:.3f}"


# -- subcommands ----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    ds = generate_synthetic(args.n, args.seed)
    train, test = holdout_split(ds, args.test_fraction, args.seed)
    scaler = fit_scaler(train)
    out = save_splits(args.out, apply_scaler(scaler, train), apply_scaler(scaler, test), scaler,
                      source="synthetic", seed=args.seed, label_spd=label_spd(ds))
    _echo_config(out, "gen-data", vars_of(args))
    print(f"wrote {train.n_rows} train / {test.n_rows} test rows, "
          f"{ds.n_features} features, label SPD {fmt(label_spd(ds))} -> {out}")
    return EXIT_OK


def cmd_ingest_adult(args) -> int:
    train, test = load_adult(args.train, args.test)
    scaler = fit_scaler(train)
    out = save_splits(args.out, apply_scaler(scaler, train), apply_scaler(scaler, test), scaler,
                      source="adult", label_spd=label_spd(train))
    _echo_config(out, "ingest-adult", vars_of(args))
    print(f"wrote {train.n_rows} train / {test.n_rows} test rows, "
          f"{train.n_features} features -> {out}")
    return EXIT_OK


def cmd_fit_propensity(args) -> int:
    train, _, _ = load_splits(args.data)
    model = fit_propensity(train, args.c_grid, folds=args.folds, seed=args.seed)
    out = _out_dir(args.out)
    save_propensity(model, out / PROPENSITY_FILE)
    _echo_config(out, "fit-propensity", {**vars_of(args), "chosen_C": model.C,
                                          "cv_accuracy": model.cv_scores})
    print(f"C={fmt(model.C)} nonzero weights {model.n_nonzero}/{model.weights.size}")
    return EXIT_OK


def _experiment(args):
    train, test, _ = load_splits(args.data)
    path = Path(args.propensity)
    if path.is_dir():
        path = path / PROPENSITY_FILE
    prop = load_propensity(path)
    gbt = GBTConfig(max_rounds=args.max_rounds)
    config = ExperimentConfig(loss=args.loss, model=args.model, n1=args.n1, n2=args.n2,
                              threshold=args.threshold, linear_step=args.linear_step,
                              seed=args.seed, max_phase_steps=args.max_phase_steps, gbt=gbt)
    return Experiment(train, test, prop, config)


def cmd_train(args) -> int:
    ex = _experiment(args)
    out = _out_dir(args.out)
    _echo_config(out, "train", {**vars_of(args), "experiment": ex.config.to_dict()})
    model, trace, row = ex.run(args.lam)
    _save_model(model, out / "model.csv")
    write_trace(trace, out / "trace.csv")
    _write_rows(out / "metrics.csv", [row], _report_columns(ex.config, ex.train.feature_names))
    print(", ".join(f"{k}={fmt(row[k])}" for k in ("lambda", "accuracy", "precision",
                                                      "spd_outcome")))
    return EXIT_OK


def _done_lambdas(report: Path) -> dict[float, dict]:
    if not report.exists():
        return {}
    with report.open(newline="") as fh:
        return {float(r["lambda"]): r for r in csv.DictReader(fh)}


def cmd_sweep(args) -> int:
    ex = _experiment(args)
    out = _out_dir(args.out)
    for sub in ("traces", "models"):
        (out / sub).mkdir(exist_ok=True)
    grid = lambda_grid() if args.lambdas is None else np.array(sorted(set(args.lambdas)))
    _echo_config(out, "sweep", {**vars_of(args), "grid": [float(v) for v in grid],
                                "experiment": ex.config.to_dict()})
    columns = _report_columns(ex.config, ex.train.feature_names)
    report = out / "report.csv"
    done = _done_lambdas(report)
    if done and list(next(iter(done.values())).keys()) != columns:
        raise UsageError(f"{report} was written with different columns; use a fresh --out")
    todo = [float(v) for v in grid if not any(abs(v - d) < 1e-9 for d in done)]
    if done:
        print(f"resuming: {len(done)} lambda values already in {report}")

    lock = threading.Lock()
    failures = []
    if not report.exists():
        _write_rows(report, [], columns)

    def run_one(lam):
        tag = _lambda_tag(lam)
        try:
            model, trace, row = ex.run(lam)
        except Exception as exc:  # recorded, sweep continues
            logger.exception("lambda=%g failed", lam)
            with lock:
                failures.append({"lambda": lam, "error": f"{type(exc).__name__}: {exc}"})
            return
        _save_model(model, out / "models" / f"model_lambda={tag}.csv")
        write_trace(trace, out / "traces" / f"trace_lambda={tag}.csv")
        with lock, report.open("a", newline="") as fh:
            csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore").writerow(
                {k: fmt(row.get(k, math.nan)) for k in columns})
        print(f"lambda={tag} accuracy={fmt(row['accuracy'])} "
              f"spd_outcome={fmt(row['spd_outcome'])}", flush=True)

    if args.jobs == 1:
        for lam in todo:
            run_one(lam)
    else:
        with ThreadPoolExecutor(args.jobs) as pool:
            list(pool.map(run_one, todo))

    # rewrite in lambda order (parallel runs append out of order)
    rows = sorted(_done_lambdas(report).values(), key=lambda r: float(r["lambda"]))
    with report.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        w.writerows(rows)
    if failures:
        _write_rows(out / "failures.csv", sorted(failures, key=lambda r: r["lambda"]),
                    ["lambda", "error"])
        print(f"{len(failures)} lambda values failed; see {out / 'failures.csv'}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = {}
    for i in range(args.instances):
        scm = random_scm(rng, tie_levels=bool(i % 2))
        for k, v in verify_identities(scm).as_dict().items():
            worst[k] = max(worst.get(k, 0.0), v)
    width = max(map(len, worst))
    for k, v in worst.items():
        print(f"{k:<{width}}  {fmt(v)}  {'ok' if v <= args.tol else 'FAIL'}")
    overall = max(worst.values())
    print(f"{'max':<{width}}  {fmt(overall)}  over {args.instances} instances")
    return EXIT_OK if overall <= args.tol else EXIT_ORACLE


def vars_of(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


# -- parser -------------------------------------------------------------------

def _model_flags(p):
    p.add_argument("--data", required=True, help="directory with train.csv/test.csv/manifest.json")
    p.add_argument("--propensity", required=True, help="propensity.csv or its directory")
    p.add_argument("--loss", choices=LOSSES, default="cde")
    p.add_argument("--model", choices=MODELS, default="linear")
    p.add_argument("--n1", type=_nonneg_int, default=1, help="alpha polynomial degree")
    p.add_argument("--n2", type=_nonneg_int, default=0, help="beta polynomial degree")
    p.add_argument("--threshold", type=_fraction, default=0.5)
    p.add_argument("--seed", type=int, default=123, help="seed for the booster holdout split")
    p.add_argument("--linear-step", type=float, default=ExperimentConfig.linear_step)
    p.add_argument("--max-phase-steps", type=_positive_int, default=None,
                   help="per-phase step cap (default 5000 linear, derived from --max-rounds for gbt)")
    p.add_argument("--max-rounds", type=_positive_int, default=GBTConfig.max_rounds)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairreg", description="Fairness-regularized classifiers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=123)
    p.add_argument("--test-fraction", type=_fraction, default=0.33)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("ingest-adult", help="encode and scale the UCI Adult files")
    p.add_argument("--train", required=True, help="adult.data")
    p.add_argument("--test", required=True, help="adult.test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest_adult)

    p = sub.add_parser("fit-propensity", help="fit the L1 logistic balancing-score model")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=123)
    p.add_argument("--c-grid", type=lambda s: [float(v) for v in s.split(",")],
                   default=list(C_GRID))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_propensity)

    p = sub.add_parser("train", help="train at a single lambda")
    _model_flags(p)
    p.add_argument("--lambda", dest="lam", type=_lambda, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train over the lambda grid and write report.csv")
    _model_flags(p)
    p.add_argument("--lambdas", type=_lambda_list, default=None,
                   help="comma-separated subset of lambdas (default: 0 to 0.975 step 0.025)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="lambda points run in parallel")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="check the causal identities on random finite SCMs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=_positive_int, default=200)
    p.add_argument("--tol", type=float, default=ORACLE_TOL)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "model", None) == "gbt" and getattr(args, "max_phase_steps", None):
        if 2 * args.max_phase_steps + 50 > args.max_rounds:
            parser.error("--max-phase-steps too large for --max-rounds "
                         "(two phases plus 50 ramp rounds must fit)")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fairreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"fairreg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
