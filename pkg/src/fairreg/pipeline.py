"""End-to-end experiment wiring: propensity scores, fair target, losses, trainer, metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from functools import partial
from typing import Optional

import numpy as np

from .datasets import Dataset
from .losses import CDERegularizer, bce, spd_reg
from .metrics import metrics_row
from .propensity import PropensityModel, predict_propensity
from .schedule import AnnealPlan, LossParts, anneal_train, lambda_grid, sweep
from .surrogate import fair_target_coeffs
from .trainers import Booster, GBTConfig, LinearDescent, baseline_logistic

logger = logging.getLogger(__name__)

LOSSES = ("spd", "cde")
MODELS = ("linear", "gbt")


@dataclass(frozen=True)
class ExperimentConfig:
    loss: str = "cde"
    model: str = "linear"
    n1: int = 1
    n2: int = 0
    threshold: float = 0.5
    linear_step: float = 1.0
    holdout_fraction: float = 0.33
    seed: int = 123
    max_phase_steps: Optional[int] = None
    gbt: GBTConfig = field(default_factory=GBTConfig)

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.n1 < 0 or self.n2 < 0:
            raise ValueError("n1 and n2 must be non-negative")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


def loss_parts(ds: Dataset, kind: str, b=None, fair_target=None) -> LossParts:
    utility = partial(bce, y=ds.y)
    if kind == "spd":
        return LossParts(utility, partial(spd_reg, z=ds.z))
    return LossParts(utility, CDERegularizer(b, ds.z, fair_target))


class Experiment:
    """One dataset/loss/model combination, runnable at any lambda.

    The linear model starts from the unpenalized logistic fit and early-stops
    on the training set; the booster holds out a fraction of the training rows
    for early stopping. The propensity model and fair target are computed once
    and shared across lambda values.
    """

    def __init__(self, train: Dataset, test: Dataset, propensity: PropensityModel,
                 config: ExperimentConfig = ExperimentConfig()):
        self.config = config
        self.train, self.test = train, test
        self.propensity = propensity
        self.b_train = predict_propensity(propensity, train)
        self.b_test = predict_propensity(propensity, test)
        self.fair_target = fair_target_coeffs(train.y, self.b_train, train.z, config.n1, config.n2)

        if config.model == "linear":
            self.fit_idx = self.es_idx = np.arange(train.n_rows)
        else:
            n = train.n_rows
            n_hold = int(np.floor(config.holdout_fraction * n))
            perm = np.random.default_rng(config.seed).permutation(n)
            self.es_idx, self.fit_idx = np.sort(perm[:n_hold]), np.sort(perm[n_hold:])
        fit_set = train.subset(self.fit_idx)
        es_set = train.subset(self.es_idx)
        self.fit_set, self.es_set = fit_set, es_set
        self.fit_parts = loss_parts(fit_set, config.loss, self.b_train[self.fit_idx],
                                    self.fair_target)
        if config.model == "linear":
            self.es_parts = self.fit_parts
            self.init = baseline_logistic(train)
        else:
            self.es_parts = loss_parts(es_set, config.loss, self.b_train[self.es_idx],
                                       self.fair_target)
            self.init = None

    def plan(self, lam: float) -> AnnealPlan:
        cap = self.config.max_phase_steps
        if cap is None:
            # rounds are capped at gbt.max_rounds in total
            cap = 5000 if self.config.model == "linear" else (self.config.gbt.max_rounds - 50) // 2
        return AnnealPlan(lam=lam, es_set="train" if self.config.model == "linear" else "holdout",
                          max_phase_steps=cap)

    def trainer(self):
        if self.config.model == "linear":
            return LinearDescent(self.fit_set.features, self.init, self.config.linear_step), "train"
        return Booster(self.fit_set.features, self.fit_set.y, self.config.gbt,
                       tracked={"es": self.es_set.features}), "es"

    def evaluate(self, lam, model) -> dict:
        scores = model.predict(self.test.features)
        row = metrics_row(lam, scores, self.test.y, self.test.z, self.b_test, self.fair_target,
                          self.config.threshold)
        if self.config.model == "linear":
            row.update({f"w:{n}": float(w) for n, w in zip(self.train.feature_names, model.weights)})
            row["w:intercept"] = float(model.intercept)
        return row

    def run(self, lam: float):
        trainer, es_key = self.trainer()
        model, trace = anneal_train(trainer, self.fit_parts, self.es_parts, self.plan(lam), es_key)
        return model, trace, self.evaluate(lam, model)

    def sweep(self, grid=None, on_result=None, skip=()):
        return sweep(self.run, lambda_grid() if grid is None else grid, on_result, skip)
