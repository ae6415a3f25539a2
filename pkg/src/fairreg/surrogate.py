"""Polynomial-in-b regression of a target on (b, Z).

Rows of the design are ``[1, b, ..., b^M, Z, Z*b, ..., Z*b^N2]``. Fitting it to
the true labels defines the fair target; fitting it to model scores gives the
surrogate coefficients that the CDE penalty constrains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RIDGE = 1e-10
MAX_CONDITION = 1e14


class SurrogateFitError(np.linalg.LinAlgError):
    def __init__(self, message, condition):
        super().__init__(f"{message} (condition number {condition:.3g})")
        self.condition = condition


@dataclass(frozen=True)
class DesignMatrix:
    matrix: np.ndarray
    alpha_degree: int
    beta_degree: int

    @property
    def n_coefficients(self) -> int:
        return self.alpha_degree + self.beta_degree + 2


@dataclass(frozen=True)
class SurrogateFit:
    alpha: np.ndarray
    beta: np.ndarray
    condition: float

    @property
    def zeta(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta])


@dataclass(frozen=True)
class FairTargetCoeffs:
    gamma: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    n1: int
    n2: int

    @property
    def degree(self) -> int:
        return max(self.n1, self.n2)

    def expected(self, b) -> np.ndarray:
        """E[Y_f | b], the same for both groups."""
        return np.polyval(self.gamma[::-1], np.asarray(b, float))


@dataclass(frozen=True)
class InfluenceMatrix:
    """Linear map from a target vector to OLS coefficients: ``zeta = matrix @ target``."""

    matrix: np.ndarray
    alpha_degree: int
    beta_degree: int

    def coefficients(self, target) -> SurrogateFit:
        zeta = self.matrix @ np.asarray(target, float)
        k = self.alpha_degree + 1
        return SurrogateFit(zeta[:k], zeta[k:], float("nan"))


def design_matrix(b, z, alpha_degree: int, beta_degree: int) -> DesignMatrix:
    b = np.asarray(b, dtype=float)
    z = np.asarray(z, dtype=float)
    if b.shape != z.shape or b.ndim != 1:
        raise ValueError("b and z must be vectors of equal length")
    if alpha_degree < 0 or beta_degree < 0:
        raise ValueError("polynomial degrees must be non-negative")
    powers = b[:, None] ** np.arange(max(alpha_degree, beta_degree) + 1)
    G = np.hstack([powers[:, : alpha_degree + 1], z[:, None] * powers[:, : beta_degree + 1]])
    return DesignMatrix(G, alpha_degree, beta_degree)


def build_design(b, z, n1: int, n2: int) -> DesignMatrix:
    """Surrogate design: alpha block of degree max(n1, n2), beta block of degree n2."""
    return design_matrix(b, z, max(n1, n2), n2)


def _ridge_qr(design: DesignMatrix, ridge: float):
    G = design.matrix
    n, p = G.shape
    if n < p:
        raise SurrogateFitError(f"need at least {p} rows, got {n}", float("inf"))
    if ridge > 0:
        pen = np.sqrt(ridge) * np.eye(p)[1:]  # intercept left unpenalized
        A = np.vstack([G, pen])
    else:
        A = G
    Q, R = np.linalg.qr(A)
    sv = np.linalg.svd(R, compute_uv=False)
    condition = float((sv[0] / sv[-1]) ** 2) if sv[-1] > 0 else float("inf")
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SurrogateFitError("normal equations are rank deficient", condition)
    return Q[:n], R, condition


def fit_ols(design: DesignMatrix, target, ridge: float = DEFAULT_RIDGE) -> SurrogateFit:
    """Solve ``(G'G + ridge*D) zeta = G' target`` with D the identity minus the intercept.

    The system is solved through a QR factorization of the augmented design,
    which is the same solution with the conditioning of G rather than G'G.
    """
    target = np.asarray(target, dtype=float)
    Qn, R, condition = _ridge_qr(design, ridge)
    zeta = np.linalg.solve(R, Qn.T @ target)
    k = design.alpha_degree + 1
    return SurrogateFit(zeta[:k], zeta[k:], condition)


def influence_matrix(design: DesignMatrix, ridge: float = DEFAULT_RIDGE) -> InfluenceMatrix:
    Qn, R, _ = _ridge_qr(design, ridge)
    M = np.linalg.solve(R, Qn.T)
    return InfluenceMatrix(M, design.alpha_degree, design.beta_degree)


def gamma_from_fit(alpha, beta, n1: int, n2: int) -> np.ndarray:
    """gamma_k = alpha_k [k <= n1] + beta_k / 2 [k <= n2]."""
    gamma = np.zeros(max(n1, n2) + 1)
    gamma[: n1 + 1] += np.asarray(alpha, float)[: n1 + 1]
    gamma[: n2 + 1] += 0.5 * np.asarray(beta, float)[: n2 + 1]
    return gamma


def fair_target_coeffs(y, b, z, n1: int, n2: int, ridge: float = DEFAULT_RIDGE) -> FairTargetCoeffs:
    """Regress the true labels on (b, Z) and symmetrize away the direct effect."""
    fit = fit_ols(design_matrix(b, z, n1, n2), y, ridge=ridge)
    return FairTargetCoeffs(gamma_from_fit(fit.alpha, fit.beta, n1, n2),
                            fit.alpha, fit.beta, n1, n2)
