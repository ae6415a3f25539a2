"""Logistic-form linear classifier trained by full-batch gradient descent on an
arbitrary loss of its probability scores."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from sklearn.linear_model import LogisticRegression

from ..losses import LossBundle, sigmoid
from .stopping import StoppingRule

DEFAULT_STEP = 1.0
MAX_HALVINGS = 40


class TrainingError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    feature_names: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def margin(self, X) -> np.ndarray:
        return np.asarray(X, float) @ self.weights + self.intercept

    def predict(self, X) -> np.ndarray:
        return sigmoid(self.margin(X))

    def copy(self) -> "LinearModel":
        return LinearModel(self.weights.copy(), float(self.intercept),
                           list(self.feature_names), list(self.trace))


def baseline_logistic(train) -> LinearModel:
    """Unpenalized maximum-likelihood logistic regression (the lambda=0 starting point)."""
    lr = LogisticRegression(penalty=None, solver="lbfgs", max_iter=10_000, tol=1e-10)
    lr.fit(train.features, train.y)
    return LinearModel(lr.coef_[0].copy(), float(lr.intercept_[0]), list(train.feature_names))


def zero_model(train) -> LinearModel:
    return LinearModel(np.zeros(train.n_features), 0.0, list(train.feature_names))


class LinearDescent:
    """Gradient descent on (w, c) through ``scores = sigmoid(X w + c)``.

    The step starts at ``step`` and is halved, permanently, whenever a trial
    step would increase the loss.
    """

    space = "probability"

    def __init__(self, X, init: LinearModel, step: float = DEFAULT_STEP, tracked=None):
        self.X = np.asarray(X, float)
        self.w = np.asarray(init.weights, float).copy()
        self.c = float(init.intercept)
        self.lr = step
        self.names = list(init.feature_names)
        self._tracked = {k: np.asarray(v, float) for k, v in (tracked or {}).items()}
        self.n_steps = 0

    def scores(self, which: str = "train") -> np.ndarray:
        X = self.X if which == "train" else self._tracked[which]
        return sigmoid(X @ self.w + self.c)

    def parameter_gradient(self, bundle: LossBundle, p):
        gm = bundle.grad * p * (1.0 - p)
        return self.X.T @ gm, float(gm.sum())

    def step(self, loss_fn: Callable[[np.ndarray], LossBundle]) -> LossBundle:
        p = self.scores()
        bundle = loss_fn(p)
        if not np.isfinite(bundle.value):
            raise TrainingError(f"non-finite loss at step {self.n_steps}")
        gw, gc = self.parameter_gradient(bundle, p)
        for _ in range(MAX_HALVINGS):
            w_new = self.w - self.lr * gw
            c_new = self.c - self.lr * gc
            trial = loss_fn(sigmoid(self.X @ w_new + c_new)).value
            if not np.isfinite(trial):
                raise TrainingError(f"non-finite loss at step {self.n_steps}")
            if trial <= bundle.value:
                self.w, self.c = w_new, c_new
                break
            self.lr *= 0.5
        self.n_steps += 1
        return bundle

    def model(self) -> LinearModel:
        return LinearModel(self.w.copy(), self.c, list(self.names))


def train_linear(train, loss_fn, init: LinearModel | None = None, step: float = DEFAULT_STEP,
                 stop: StoppingRule = StoppingRule(patience=5), monitor=None) -> LinearModel:
    """Descend from ``init`` until ``monitor()`` stops improving (default: the training loss)."""
    init = baseline_logistic(train) if init is None else init
    trainer = LinearDescent(train.features, init, step)
    tracker = stop.tracker()
    trace = []
    while trainer.n_steps < stop.max_steps:
        try:
            bundle = trainer.step(loss_fn)
        except TrainingError as err:
            raise TrainingError(str(err), trace) from err
        value = loss_fn(trainer.scores()).value if monitor is None else monitor(trainer)
        trace.append((trainer.n_steps, bundle.value, value))
        if not np.isfinite(value):
            raise TrainingError("non-finite monitored loss", trace)
        if tracker.update(value):
            break
    model = trainer.model()
    model.trace = trace
    return model


def save_linear(model: LinearModel, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        w.writerow(["intercept", repr(float(model.intercept))])
        names = model.feature_names or [f"x{j}" for j in range(model.weights.size)]
        for name, v in zip(names, model.weights):
            w.writerow([name, repr(float(v))])


def load_linear(path) -> LinearModel:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    intercept = float(rows[0][1])
    return LinearModel(np.array([float(v) for _, v in rows[1:]]), intercept,
                       [n for n, _ in rows[1:]])
