"""Losses with per-example gradients and diagonal Hessians.

Derivatives are taken with respect to the probability scores ``Y~_i``;
:func:`to_margin_space` converts them for learners that work on raw margins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .surrogate import (DEFAULT_RIDGE, FairTargetCoeffs, InfluenceMatrix, SurrogateFit,
                        build_design, influence_matrix)

PROB_CLIP = 1e-12
HESS_FLOOR = 1e-16


@dataclass(frozen=True)
class LossBundle:
    value: float
    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        if self.grad.shape != self.hess.shape:
            raise ValueError("gradient and Hessian must have the same length")

    def scaled(self, factor: float) -> "LossBundle":
        return LossBundle(factor * self.value, factor * self.grad, factor * self.hess)


def _check_groups(z):
    z = np.asarray(z)
    n1 = int(z.sum())
    n0 = z.size - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("both protected groups must be present")
    return z.astype(bool), n0, n1


def bce(scores, y) -> LossBundle:
    """Mean binary cross-entropy."""
    p = np.clip(np.asarray(scores, float), PROB_CLIP, 1.0 - PROB_CLIP)
    y = np.asarray(y, float)
    n = p.size
    value = -np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (n * p * (1.0 - p))
    hess = (y / p**2 + (1.0 - y) / (1.0 - p) ** 2) / n
    return LossBundle(float(value), grad, hess)


def spd_reg(scores, z) -> LossBundle:
    """Squared gap between the group means of the scores."""
    s = np.asarray(scores, float)
    g1, n0, n1 = _check_groups(z)
    gap = s[g1].mean() - s[~g1].mean()
    w = np.where(g1, 1.0 / n1, -1.0 / n0)
    return LossBundle(float(gap**2), 2.0 * gap * w, 2.0 * w**2)


class CDERegularizer:
    """Penalty on the direct-effect coefficients of a surrogate regression.

    The scores are regressed on ``(b, Z)`` with polynomial degree
    ``max(n1, n2)`` in the group-independent block and ``n2`` in the Z block.
    The penalty is ``sum_{k>=1} [|a_k| > |g_k|] (a_k - g_k)^2 + sum_k beta_k^2``
    with ``g`` the fair-target coefficients. The influence matrix is built once
    per (b, z) so each evaluation costs one matrix-vector product.
    """

    def __init__(self, b, z, fair_target: FairTargetCoeffs, ridge: float = DEFAULT_RIDGE):
        _check_groups(z)
        self.fair_target = fair_target
        self.n1, self.n2 = fair_target.n1, fair_target.n2
        self.design = build_design(b, z, self.n1, self.n2)
        self.influence: InfluenceMatrix = influence_matrix(self.design, ridge)
        self._n_alpha = self.design.alpha_degree + 1
        self._m_sq = self.influence.matrix**2

    def surrogate(self, scores) -> SurrogateFit:
        return self.influence.coefficients(scores)

    def active_set(self, fit: SurrogateFit) -> np.ndarray:
        """Indicator of alpha_k (k >= 1) exceeding |gamma_k|; boundary counts as inactive."""
        gamma = self.fair_target.gamma
        active = np.abs(fit.alpha) > np.abs(gamma)
        active[0] = False
        return active

    def boundary_distance(self, scores) -> float:
        fit = self.surrogate(scores)
        gap = np.abs(np.abs(fit.alpha) - np.abs(self.fair_target.gamma))[1:]
        return float(gap.min()) if gap.size else np.inf

    def __call__(self, scores) -> LossBundle:
        scores = np.asarray(scores, float)
        fit = self.surrogate(scores)
        active = self.active_set(fit)
        d_alpha = np.where(active, fit.alpha - self.fair_target.gamma, 0.0)
        value = np.sum(d_alpha**2) + np.sum(fit.beta**2)
        # dR/dzeta and the (diagonal) Hessian of R in zeta
        dz = 2.0 * np.concatenate([d_alpha, fit.beta])
        hz = 2.0 * np.concatenate([active.astype(float), np.ones_like(fit.beta)])
        return LossBundle(float(value), self.influence.matrix.T @ dz, self._m_sq.T @ hz)


def cde_reg(scores, z, b, fair_target: FairTargetCoeffs) -> LossBundle:
    """One-shot CDE penalty; prefer :class:`CDERegularizer` inside training loops."""
    return CDERegularizer(b, z, fair_target)(scores)


def combine(lo: LossBundle, rf: LossBundle, lam: float) -> LossBundle:
    """(1 - lam) * lo + lam * rf."""
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    a = 1.0 - lam
    return LossBundle(a * lo.value + lam * rf.value,
                      a * lo.grad + lam * rf.grad,
                      a * lo.hess + lam * rf.hess)


def to_margin_space(bundle: LossBundle, scores, floor: float | None = HESS_FLOOR) -> LossBundle:
    """Chain rule through ``Y~ = sigmoid(s)``.

    ``floor=None`` returns the exact second derivative, which can be negative;
    boosting needs the floored version.
    """
    p = np.asarray(scores, float)
    d1 = p * (1.0 - p)
    d2 = d1 * (1.0 - 2.0 * p)
    grad = bundle.grad * d1
    hess = bundle.hess * d1**2 + bundle.grad * d2
    if floor is not None:
        hess = np.maximum(hess, floor)
    return LossBundle(bundle.value, grad, hess)


def sigmoid(s):
    s = np.asarray(s, float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out
