"""Annealed double early stopping.

For a target weight ``lam``:

1. train on ``(1-l*) L_o + l* R_f`` with ``l* = min(lam, 0.3)`` until the
   utility loss stops improving on the early-stopping set (patience 5);
2. raise ``l*`` linearly to ``lam`` over 50 single-step increments;
3. train on ``(1-lam) L_o + lam R_f`` until that loss stops improving on the
   early-stopping set (patience 20).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .losses import LossBundle, combine, to_margin_space
from .trainers.stopping import EarlyStopper, MIN_IMPROVEMENT

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["lambda", "phase", "iteration", "lambda_star", "L_o", "R_f", "L_f",
                 "es_value", "es_best"]


def lambda_grid(step: float = 0.025, stop: float = 0.975) -> np.ndarray:
    n = int(round(stop / step)) + 1
    return np.round(np.arange(n) * step, 10)


@dataclass(frozen=True)
class AnnealPlan:
    lam: float
    warm_cap: float = 0.3
    ramp_steps: int = 50
    warm_patience: int = 5
    final_patience: int = 20
    es_set: str = "train"
    min_delta: float = MIN_IMPROVEMENT
    max_phase_steps: int = 5000

    def __post_init__(self):
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lambda must lie in [0, 1), got {self.lam}")

    @property
    def warm_lambda(self) -> float:
        return min(self.lam, self.warm_cap)

    def ramp(self) -> np.ndarray:
        k = np.arange(1, self.ramp_steps + 1)
        return self.warm_lambda + (self.lam - self.warm_lambda) * k / self.ramp_steps


@dataclass
class LossParts:
    """Utility loss and fairness penalty for one dataset, as functions of the scores."""

    utility: Callable[[np.ndarray], LossBundle]
    penalty: Callable[[np.ndarray], LossBundle]

    def combined(self, lam: float) -> Callable[[np.ndarray], LossBundle]:
        def fn(scores):
            if lam == 0.0:
                return self.utility(scores)
            return combine(self.utility(scores), self.penalty(scores), lam)
        return fn

    def values(self, scores, lam):
        lo = self.utility(scores).value
        rf = self.penalty(scores).value
        return lo, rf, (1.0 - lam) * lo + lam * rf


class PhaseError(RuntimeError):
    pass


def _loss_for(trainer, parts: LossParts, lam: float):
    fn = parts.combined(lam)
    if getattr(trainer, "space", "probability") == "margin":
        return lambda p: to_margin_space(fn(p), p)
    return fn


def anneal_train(trainer, train_parts: LossParts, es_parts: LossParts, plan: AnnealPlan,
                 es_key: str = "train"):
    """Run the three-phase procedure on an incremental ``trainer``.

    ``trainer`` needs ``step(loss_fn)``, ``scores(which)`` and ``model()``;
    ``es_key`` names the score set used for early stopping ("train" reuses the
    training rows). Returns ``(model, trace)``; the model is the last state.
    """
    lam = plan.lam
    trace = []
    it = 0

    def record(phase, lam_star, es_watch):
        nonlocal it
        it += 1
        p = trainer.scores("train")
        lo, rf, lf = train_parts.values(p, lam_star)
        es_val = None
        if es_watch is not None:
            es_val = es_watch()
        trace.append({"lambda": lam, "phase": phase, "iteration": it, "lambda_star": lam_star,
                      "L_o": lo, "R_f": rf, "L_f": lf,
                      "es_value": math.nan if es_val is None else es_val, "es_best": math.nan})
        return es_val

    def es_value(watch, lam_star):
        def f():
            p = trainer.scores(es_key)
            if watch == "L_o":
                return es_parts.utility(p).value
            return es_parts.values(p, lam_star)[2]
        return f

    def run_phase(name, lam_star, watch, patience):
        stopper = EarlyStopper(patience, plan.min_delta)
        loss_fn = _loss_for(trainer, train_parts, lam_star)
        for _ in range(plan.max_phase_steps):
            try:
                trainer.step(loss_fn)
            except Exception as exc:
                raise PhaseError(f"{name} phase failed at iteration {it + 1}: {exc}") from exc
            v = record(name, lam_star, es_value(watch, lam_star))
            done = stopper.update(v)
            trace[-1]["es_best"] = stopper.best
            if done:
                return
        logger.warning("%s phase hit the %d-step cap at lambda=%g", name, plan.max_phase_steps, lam)

    run_phase("warm", plan.warm_lambda, "L_o", plan.warm_patience)
    for lam_star in plan.ramp():
        try:
            trainer.step(_loss_for(trainer, train_parts, float(lam_star)))
        except Exception as exc:
            raise PhaseError(f"ramp phase failed at iteration {it + 1}: {exc}") from exc
        record("ramp", float(lam_star), None)
    run_phase("final", lam, "L_f", plan.final_patience)
    return trainer.model(), trace


def write_trace(trace, path, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        if new:
            w.writeheader()
        for row in trace:
            w.writerow({k: fmt(v) for k, v in row.items()})


def fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return v


@dataclass
class SweepResult:
    lam: float
    model: object
    metrics: Optional[dict]
    trace: list
    error: Optional[str] = None


def sweep(run_one: Callable[[float], tuple], grid=None, on_result=None, skip=()):
    """Train every grid point independently via ``run_one(lam) -> (model, trace, metrics)``.

    Failures are recorded and the sweep moves on. ``on_result`` is called after
    each point (used to flush outputs); grid points in ``skip`` are not rerun.
    """
    grid = lambda_grid() if grid is None else np.asarray(grid, float)
    results = []
    for lam in grid:
        lam = float(lam)
        if any(abs(lam - s) < 1e-12 for s in skip):
            continue
        try:
            model, trace, metrics = run_one(lam)
            res = SweepResult(lam, model, metrics, trace)
        except Exception as exc:  # recorded, sweep continues
            logger.exception("lambda=%g failed", lam)
            res = SweepResult(lam, None, None, [], error=f"{type(exc).__name__}: {exc}")
        results.append(res)
        if on_result is not None:
            on_result(res)
    return results
