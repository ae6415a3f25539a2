"""Balancing scores b(x) = P(Z=1 | x) from L1-penalized logistic regression."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import Dataset
from .losses import sigmoid

logger = logging.getLogger(__name__)

C_GRID = (1e-2, 1e-1, 1.0, 10.0, 1e2)
CLIP_EPS = 1e-6


class PropensityConvergenceError(RuntimeError):
    def __init__(self, C, iterations, last_change, objective):
        super().__init__(f"L1 logistic solver did not converge for C={C}: "
                         f"{iterations} iterations, last max weight change {last_change:.3g}, "
                         f"objective {objective:.6g}")
        self.C = C
        self.iterations = iterations
        self.last_change = last_change
        self.objective = objective


@dataclass(frozen=True)
class PropensityModel:
    weights: np.ndarray
    intercept: float
    C: float
    eps: float = CLIP_EPS
    feature_names: list[str] = field(default_factory=list)
    cv_scores: dict = field(default_factory=dict)

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.weights))


def _objective(X, t, w, c, C):
    s = X @ w + c
    # log(1 + e^s) - t*s, computed stably
    loss = np.mean(np.logaddexp(0.0, s) - t * s)
    return loss + np.abs(w).sum() / (C * X.shape[0])


def fit_l1_logistic(X, t, C, w0=None, c0=0.0, max_iter=10_000, tol=1e-8):
    """Minimize ``C * sum(logloss) + ||w||_1`` with an unpenalized intercept.

    Accelerated proximal gradient (FISTA) on the equivalent mean-loss problem,
    with the function-value adaptive restart. Converged when no coordinate
    (intercept included) moves by more than ``tol`` in one step.
    """
    X = np.asarray(X, float)
    t = np.asarray(t, float)
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    lip = np.linalg.norm(Xa, 2) ** 2 / (4.0 * n)
    step = 1.0 / lip
    thresh = step / (C * n)

    theta = np.zeros(d + 1) if w0 is None else np.append(np.asarray(w0, float), c0)
    y_k = theta.copy()
    t_k = 1.0
    f_prev = np.inf
    change = np.inf
    for it in range(1, max_iter + 1):
        grad = Xa.T @ (sigmoid(Xa @ y_k) - t) / n
        new = y_k - step * grad
        new[:d] = np.sign(new[:d]) * np.maximum(np.abs(new[:d]) - thresh, 0.0)
        change = np.max(np.abs(new - theta))
        if change < tol:
            return new[:d], float(new[d]), it
        f_new = _objective(X, t, new[:d], new[d], C)
        if f_new > f_prev and t_k > 1.0:
            # restart momentum from the last iterate
            t_k = 1.0
            y_k = theta.copy()
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k**2))
        y_k = new + ((t_k - 1.0) / t_next) * (new - theta)
        theta, t_k, f_prev = new, t_next, f_new
    raise PropensityConvergenceError(C, max_iter, change, f_prev)


def _folds(n, k, seed):
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def fit_propensity(train: Dataset, c_grid: Sequence[float] = C_GRID, folds: int = 5,
                   seed: int = 123, eps: float = CLIP_EPS, max_iter: int = 10_000,
                   tol: float = 1e-8) -> PropensityModel:
    """Select the inverse penalty C by k-fold accuracy at predicting Z, then refit.

    Ties in mean accuracy go to the smaller C.
    """
    X, z = train.features, train.z.astype(float)
    grid = sorted(float(c) for c in c_grid)
    parts = _folds(train.n_rows, folds, seed)
    accs = {C: [] for C in grid}
    for k, hold in enumerate(parts):
        fit_idx = np.concatenate([p for j, p in enumerate(parts) if j != k])
        path = _path(X[fit_idx], z[fit_idx], grid, max_iter, tol)
        for C, (w, c) in zip(grid, path):
            pred = (X[hold] @ w + c) > 0
            accs[C].append(np.mean(pred == (z[hold] > 0.5)))
    scores = {C: float(np.mean(a)) for C, a in accs.items()}
    for C in grid:
        logger.info("propensity C=%g mean fold accuracy %.5f", C, scores[C])
    chosen = select_c(scores)
    w, c = _path(X, z, [C for C in grid if C <= chosen], max_iter, tol)[-1]
    return PropensityModel(w, c, chosen, eps, list(train.feature_names), scores)


def select_c(scores: dict) -> float:
    """Best mean accuracy; ties go to the smaller C (stronger penalty)."""
    best = max(scores.values())
    return min(C for C, s in scores.items() if s >= best - 1e-12)


def _path(X, t, grid, max_iter, tol):
    # increasing C, each fit warm-started from the previous solution
    out, w, c = [], None, 0.0
    for C in grid:
        w, c, _ = fit_l1_logistic(X, t, C, w0=w, c0=c, max_iter=max_iter, tol=tol)
        out.append((w, c))
    return out


def predict_propensity(model: PropensityModel, ds) -> np.ndarray:
    X = ds.features if isinstance(ds, Dataset) else np.asarray(ds, float)
    if X.ndim != 2 or X.shape[1] != model.weights.size:
        raise ValueError(f"expected {model.weights.size} features, got shape {X.shape}")
    b = sigmoid(X @ model.weights + model.intercept)
    return np.clip(b, model.eps, 1.0 - model.eps)


def save_propensity(model: PropensityModel, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        w.writerow(["intercept", repr(model.intercept)])
        w.writerow(["C", repr(model.C)])
        w.writerow(["eps", repr(model.eps)])
        names = model.feature_names or [f"x{j}" for j in range(model.weights.size)]
        for name, v in zip(names, model.weights):
            w.writerow([f"w:{name}", repr(float(v))])


def load_propensity(path) -> PropensityModel:
    meta, names, weights = {}, [], []
    with Path(path).open(newline="") as fh:
        rows = csv.reader(fh)
        next(rows)
        for key, value in rows:
            if key.startswith("w:"):
                names.append(key[2:])
                weights.append(float(value))
            else:
                meta[key] = float(value)
    return PropensityModel(np.array(weights), meta["intercept"], meta["C"], meta["eps"], names)
