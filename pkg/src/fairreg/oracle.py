"""Exact causal effects on finite structural models of the graph Z -> X -> Y, Z -> Y.

Everything here is computed by direct summation over the support of X and
serves as ground truth for the estimators elsewhere in the package.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .surrogate import design_matrix, fit_ols, gamma_from_fit

LEVEL_TOL = 1e-12


class SCMError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteSCM:
    """Finite SCM.

    Parameters
    ----------
    points : (K, d) array
        Support of the covariates X.
    p_z1 : float
        P(Z=1).
    px_given_z : (2, K) array
        Row z holds P(X = points[k] | Z = z).
    ey : (2, K) array
        Row z holds E[Y | Z = z, X = points[k]].
    """

    points: np.ndarray
    p_z1: float
    px_given_z: np.ndarray
    ey: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        px = np.asarray(self.px_given_z, dtype=float)
        ey = np.asarray(self.ey, dtype=float)
        K = pts.shape[0]
        if px.shape != (2, K) or ey.shape != (2, K):
            raise SCMError("px_given_z and ey must have shape (2, K)")
        if not 0.0 < self.p_z1 < 1.0:
            raise SCMError("P(Z=1) must lie strictly inside (0, 1)")
        if (px < 0).any() or (px > 1).any() or not np.allclose(px.sum(axis=1), 1.0, atol=1e-12):
            raise SCMError("each P(X|Z=z) must be a probability vector")
        if (ey < 0).any() or (ey > 1).any():
            raise SCMError("E[Y|Z,X] must lie in [0, 1]")
        mass = self.px_marginal_from(px, self.p_z1)
        b = self.p_z1 * px[1] / np.where(mass > 0, mass, 1.0)
        support = mass > 0
        if ((b[support] <= 0) | (b[support] >= 1)).any():
            raise SCMError("overlap violated: P(Z=1|x) must lie in (0, 1) on the support")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "px_given_z", px)
        object.__setattr__(self, "ey", ey)
        object.__setattr__(self, "p_z1", float(self.p_z1))

    @staticmethod
    def px_marginal_from(px, p_z1):
        return (1.0 - p_z1) * px[0] + p_z1 * px[1]

    @property
    def pz(self) -> np.ndarray:
        return np.array([1.0 - self.p_z1, self.p_z1])

    @property
    def px(self) -> np.ndarray:
        return self.px_marginal_from(self.px_given_z, self.p_z1)

    @property
    def support(self) -> np.ndarray:
        return self.px > 0

    def balancing_score(self) -> np.ndarray:
        """Exact propensity P(Z=1 | x) per support point (Bayes rule)."""
        px = self.px
        return self.p_z1 * self.px_given_z[1] / np.where(px > 0, px, 1.0)

    def cde_all(self) -> np.ndarray:
        return self.ey[1] - self.ey[0]

    def level_sets(self):
        """Group support points by equal balancing score.

        Returns ``(levels, labels)`` where ``labels[k]`` indexes ``levels`` and is
        -1 for points outside the support.
        """
        b = self.balancing_score()
        idx = np.flatnonzero(self.support)
        order = idx[np.argsort(b[idx], kind="stable")]
        labels = np.full(b.shape, -1)
        levels: list[float] = []
        for k in order:
            if levels and abs(b[k] - levels[-1]) <= LEVEL_TOL:
                labels[k] = len(levels) - 1
            else:
                levels.append(float(b[k]))
                labels[k] = len(levels) - 1
        return np.array(levels), labels

    def sample(self, n, rng):
        """Draw ``(point_index, z, y)`` triples."""
        z = (rng.random(n) < self.p_z1).astype(np.int8)
        k = np.empty(n, dtype=int)
        K = self.points.shape[0]
        for g in (0, 1):
            m = z == g
            k[m] = rng.choice(K, size=m.sum(), p=self.px_given_z[g])
        y = (rng.random(n) < self.ey[z, k]).astype(np.int8)
        return k, z, y


def ate(scm: DiscreteSCM) -> float:
    return float(np.dot(scm.ey[1], scm.px_given_z[1]) - np.dot(scm.ey[0], scm.px_given_z[0]))


def cde(scm: DiscreteSCM, x) -> float:
    """Controlled direct effect at support point ``x`` (index or coordinates)."""
    k = _point_index(scm, x)
    return float(scm.ey[1, k] - scm.ey[0, k])


def nde(scm: DiscreteSCM, z_star: int) -> float:
    sign = 1.0 if z_star == 1 else -1.0
    return float(sign * np.dot(scm.cde_all(), scm.px_given_z[z_star]))


def nie(scm: DiscreteSCM, z_star: int) -> float:
    e_factual = np.dot(scm.ey[z_star], scm.px_given_z[z_star])
    e_cross = np.dot(scm.ey[z_star], scm.px_given_z[1 - z_star])
    return float(e_factual - e_cross)


def mfcde(scm: DiscreteSCM, b_value: float) -> float:
    """CDE averaged over the support points whose balancing score equals ``b_value``."""
    levels, labels = scm.level_sets()
    hit = np.flatnonzero(np.abs(levels - b_value) <= LEVEL_TOL)
    if hit.size == 0:
        raise SCMError(f"balancing score {b_value!r} is not attained on the support")
    members = labels == hit[0]
    w = scm.px[members]
    return float(np.dot(w, scm.cde_all()[members]) / w.sum())


def level_distribution(scm: DiscreteSCM):
    """Per b-level: value, p(b), p(b|Z=0), p(b|Z=1), E[Y|Z=0,b], E[Y|Z=1,b], MFCDE(b)."""
    levels, labels = scm.level_sets()
    L = len(levels)
    p_b = np.zeros(L)
    p_b_z = np.zeros((2, L))
    ey_b = np.zeros((2, L))
    mf = np.zeros(L)
    for j in range(L):
        m = labels == j
        p_b[j] = scm.px[m].sum()
        p_b_z[:, j] = scm.px_given_z[:, m].sum(axis=1)
        for g in (0, 1):
            # E[Y|Z=g, b] weights points by p(x|Z=g) within the level set
            ey_b[g, j] = np.dot(scm.px_given_z[g, m], scm.ey[g, m]) / p_b_z[g, j]
        mf[j] = mfcde(scm, levels[j])
    return dict(levels=levels, p_b=p_b, p_b_z=p_b_z, ey_b=ey_b, mfcde=mf)


def saturated_fit(scm: DiscreteSCM):
    """Exact polynomial fit of E[Y|Z,b] over the balancing-score levels.

    With L distinct levels, polynomials of degree L-1 in b interpolate
    E[Y|Z=z,b] for both groups, so the regression has zero residual.
    Returns ``(fit, level_distribution)``.
    """
    lv = level_distribution(scm)
    L = len(lv["levels"])
    b = np.concatenate([lv["levels"], lv["levels"]])
    z = np.concatenate([np.zeros(L), np.ones(L)])
    target = np.concatenate([lv["ey_b"][0], lv["ey_b"][1]])
    fit = fit_ols(design_matrix(b, z, L - 1, L - 1), target, ridge=0.0)
    return fit, lv


def saturated_fair_target(scm: DiscreteSCM) -> np.ndarray:
    fit, lv = saturated_fit(scm)
    deg = len(lv["levels"]) - 1
    return gamma_from_fit(fit.alpha, fit.beta, deg, deg)


@dataclass
class IdentityReport:
    pearl_1: float
    pearl_2: float
    cde_average: float
    nde_0: float
    nde_1: float
    fair_target_nie: float
    mfcde_polynomial: float

    def __post_init__(self):
        for k, v in vars(self).items():
            setattr(self, k, float(v))

    @property
    def max_deviation(self) -> float:
        return max(self.as_dict().values())

    def as_dict(self):
        return dict(vars(self))


def verify_identities(scm: DiscreteSCM) -> IdentityReport:
    """Absolute deviations of the mediation identities on ``scm``.

    Checked: ATE = NIE(1) - NDE(0) and ATE = NDE(1) - NIE(0); the population
    average of MFCDE equals that of CDE; NDE(z) equals the MFCDE averaged over
    p(b|Z=z) (signed as NDE itself); the fair target's group gap equals
    (NIE(1) - NIE(0))/2; and the saturated beta polynomial reproduces MFCDE.
    """
    a = ate(scm)
    lv = level_distribution(scm)
    mf = lv["mfcde"]
    fit, _ = saturated_fit(scm)
    deg = len(lv["levels"]) - 1
    gamma = gamma_from_fit(fit.alpha, fit.beta, deg, deg)
    fair_b = np.polyval(gamma[::-1], lv["levels"])
    fair_gap = np.dot(lv["p_b_z"][1], fair_b) - np.dot(lv["p_b_z"][0], fair_b)
    beta_poly = np.polyval(fit.beta[::-1], lv["levels"])
    return IdentityReport(
        pearl_1=abs(a - (nie(scm, 1) - nde(scm, 0))),
        pearl_2=abs(a - (nde(scm, 1) - nie(scm, 0))),
        cde_average=abs(np.dot(scm.px, scm.cde_all()) - np.dot(lv["p_b"], mf)),
        nde_0=abs(nde(scm, 0) + np.dot(lv["p_b_z"][0], mf)),
        nde_1=abs(nde(scm, 1) - np.dot(lv["p_b_z"][1], mf)),
        fair_target_nie=abs(fair_gap - (nie(scm, 1) - nie(scm, 0)) / 2.0),
        mfcde_polynomial=float(np.max(np.abs(beta_poly - mf))),
    )


def random_scm(rng, n_points=None, dim=2, tie_levels=False, p_range=(0.2, 0.8),
               min_level_gap=0.05, max_tries=1000):
    """Random well-conditioned SCM.

    E[Y|Z,x] is drawn in [0.05, 0.95] and distinct balancing-score levels are
    at least ``min_level_gap`` apart (draws are rejected otherwise) so exact
    polynomial fits over the levels stay well conditioned. With ``tie_levels``
    the first two support points share a likelihood ratio P(x|Z=1)/P(x|Z=0),
    hence a balancing score, so MFCDE averages over a non-trivial level set.
    """
    for _ in range(max_tries):
        K = int(n_points if n_points is not None else rng.integers(2, 6))
        if tie_levels and K < 2:
            raise ValueError("tie_levels needs at least two points")
        p_z1 = float(rng.uniform(*p_range))
        px = rng.dirichlet(np.full(K, 2.0), size=2) + 0.02
        if tie_levels:
            px[1, 1] = px[0, 1] * (px[1, 0] / px[0, 0])
        px /= px.sum(axis=1, keepdims=True)
        ey = rng.uniform(0.05, 0.95, size=(2, K))
        scm = DiscreteSCM(rng.standard_normal((K, dim)), p_z1, px, ey)
        levels, _ = scm.level_sets()
        if len(levels) < 2 or np.diff(levels).min() >= min_level_gap:
            return scm
    raise RuntimeError("could not draw an SCM with separated balancing-score levels")


def _point_index(scm, x):
    if np.ndim(x) == 0:
        return int(x)
    hits = np.flatnonzero(np.all(np.isclose(scm.points, np.asarray(x, float)), axis=1))
    if hits.size == 0:
        raise SCMError(f"{x!r} is not a support point")
    return int(hits[0])


# -- text fixtures ------------------------------------------------------------

def dumps(scm: DiscreteSCM) -> str:
    d = scm.points.shape[1]
    out = io.StringIO()
    out.write(f"# p_z1={scm.p_z1!r}\n")
    out.write(",".join([f"x{j}" for j in range(d)] + ["px_z0", "px_z1", "ey_z0", "ey_z1"]) + "\n")
    for k in range(scm.points.shape[0]):
        vals = list(scm.points[k]) + [scm.px_given_z[0, k], scm.px_given_z[1, k],
                                      scm.ey[0, k], scm.ey[1, k]]
        out.write(",".join(repr(float(v)) for v in vals) + "\n")
    return out.getvalue()


def loads(text: str) -> DiscreteSCM:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines[0].startswith("# p_z1="):
        raise SCMError("missing '# p_z1=' header")
    p_z1 = float(lines[0].split("=", 1)[1])
    table = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    return DiscreteSCM(table[:, :-4], p_z1, table[:, -4:-2].T, table[:, -2:].T)


def save(scm: DiscreteSCM, path) -> None:
    Path(path).write_text(dumps(scm))


def load(path) -> DiscreteSCM:
    return loads(Path(path).read_text())
