"""Evaluation: parity gaps, accuracy, precision and test-set surrogate coefficients."""

from __future__ import annotations

import math

import numpy as np

from .surrogate import DEFAULT_RIDGE, FairTargetCoeffs, SurrogateFit, build_design, fit_ols


class UndefinedMetricError(ValueError):
    """The metric has no value on this input (e.g. precision with no positive predictions)."""


def _groups(z):
    z = np.asarray(z).astype(bool)
    if z.all() or not z.any():
        raise ValueError("both protected groups must be present")
    return z


def spd_outcomes(scores, z, threshold: float = 0.5) -> float:
    """|P(yhat=1 | Z=1) - P(yhat=1 | Z=0)| with ``yhat = scores > threshold``."""
    g = _groups(z)
    yhat = np.asarray(scores) > threshold
    return float(abs(yhat[g].mean() - yhat[~g].mean()))


def spd_scores(scores, z) -> float:
    """Gap between the group means of the raw scores (what the SPD penalty squares)."""
    g = _groups(z)
    s = np.asarray(scores, float)
    return float(abs(s[g].mean() - s[~g].mean()))


def accuracy(scores, y, threshold: float = 0.5) -> float:
    return float(np.mean((np.asarray(scores) > threshold) == np.asarray(y).astype(bool)))


def error_rate(scores, y, threshold: float = 0.5) -> float:
    return float(np.mean((np.asarray(scores) > threshold) != np.asarray(y).astype(bool)))


def precision(scores, y, threshold: float = 0.5) -> float:
    yhat = np.asarray(scores) > threshold
    if not yhat.any():
        raise UndefinedMetricError("precision is undefined without positive predictions")
    return float(np.asarray(y)[yhat].mean())


def surrogate_diagnostics(scores, b, z, fair_target: FairTargetCoeffs, n1=None, n2=None,
                          ridge: float = DEFAULT_RIDGE) -> SurrogateFit:
    """Regress scores on (b, Z) with the same design the CDE penalty uses."""
    n1 = fair_target.n1 if n1 is None else n1
    n2 = fair_target.n2 if n2 is None else n2
    return fit_ols(build_design(b, z, n1, n2), scores, ridge=ridge)


def metric_columns(n1: int, n2: int) -> list[str]:
    m = max(n1, n2)
    return (["lambda", "accuracy", "precision", "spd_outcome", "spd_scores"]
            + [f"alpha_{k}" for k in range(m + 1)]
            + [f"beta_{k}" for k in range(n2 + 1)]
            + [f"gamma_{k}" for k in range(m + 1)])


def metrics_row(lam, scores, y, z, b, fair_target: FairTargetCoeffs, threshold=0.5) -> dict:
    try:
        prec = precision(scores, y, threshold)
    except UndefinedMetricError:
        prec = math.nan
    fit = surrogate_diagnostics(scores, b, z, fair_target)
    row = {"lambda": float(lam), "accuracy": accuracy(scores, y, threshold), "precision": prec,
           "spd_outcome": spd_outcomes(scores, z, threshold), "spd_scores": spd_scores(scores, z)}
    row.update({f"alpha_{k}": float(v) for k, v in enumerate(fit.alpha)})
    row.update({f"beta_{k}": float(v) for k, v in enumerate(fit.beta)})
    row.update({f"gamma_{k}": float(v) for k, v in enumerate(fair_target.gamma)})
    return row
