"""Second-order gradient boosting with depth-limited regression trees.

Each round fits one tree to per-example margin-space gradients ``g`` and
Hessians ``h`` by exact greedy search: the split gain is
``0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l))`` and leaves take the Newton
value ``-G/(H+l)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..losses import LossBundle, sigmoid
from .stopping import StoppingRule


class BoostingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GBTConfig:
    max_depth: int = 2
    eta: float = 0.1
    reg_lambda: float = 10.0
    min_child_weight: float = 1.0
    # g and h are multiplied by this before tree fitting; None means n_train,
    # i.e. the regularizers act on a summed rather than averaged objective.
    objective_scale: Optional[float] = None
    max_rounds: int = 1000


@dataclass
class Tree:
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add_leaf(self, value: float) -> int:
        return self._add(-1, math.nan, -1, -1, value)

    def _add(self, f, t, lft, rgt, v):
        self.feature.append(f)
        self.threshold.append(t)
        self.left.append(lft)
        self.right.append(rgt)
        self.value.append(v)
        return len(self.feature) - 1

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def apply(self, X) -> np.ndarray:
        """Leaf index per row; rows with ``x < threshold`` go left."""
        X = np.asarray(X, float)
        node = np.zeros(X.shape[0], dtype=int)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        while True:
            f = feat[node]
            inner = f >= 0
            if not inner.any():
                return node
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] < thr[node[rows]]
            node[rows] = np.where(go_left, left[node[rows]], right[node[rows]])

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.value)[self.apply(X)]


@dataclass
class TreeEnsemble:
    base_score: float
    eta: float
    reg_lambda: float
    max_depth: int
    trees: list = field(default_factory=list)

    def margin(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.eta * tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        return sigmoid(self.margin(X))


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float
    left_mask: np.ndarray


class SplitFinder:
    """Exact greedy split search.

    Rows are bucketed by the distinct values of each column, so per-node
    gradient sums come from one ``bincount`` and every boundary between
    adjacent distinct values is a candidate split.
    """

    def __init__(self, X, reg_lambda: float, min_child_weight: float):
        self.X = np.asarray(X, float)
        n, F = self.X.shape
        self.values = [np.unique(self.X[:, f]) for f in range(F)]
        sizes = np.array([len(v) for v in self.values])
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.n_bins = int(sizes.sum())
        self.codes = np.empty((n, F), dtype=np.intp)
        for f, v in enumerate(self.values):
            self.codes[:, f] = np.searchsorted(v, self.X[:, f]) + self.offsets[f]
        self.bin_feature = np.repeat(np.arange(F), sizes)
        self.bin_value = np.concatenate(self.values) if F else np.empty(0)
        self.seg_start = self.offsets[self.bin_feature]
        last = np.zeros(self.n_bins, dtype=bool)
        last[self.offsets + sizes - 1] = True
        self.not_last = ~last
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight

    def _left_sums(self, per_bin):
        c = np.cumsum(per_bin)
        before = np.where(self.seg_start > 0, c[self.seg_start - 1], 0.0)
        return c - before

    def best(self, g, h, members) -> Optional[Split]:
        idx = np.flatnonzero(members)
        count = idx.size
        if count < 2 or self.n_bins == 0:
            return None
        lam = self.reg_lambda
        F = self.X.shape[1]
        codes = self.codes[idx].ravel()
        gm, hm = g[idx], h[idx]
        G, H = gm.sum(), hm.sum()
        Gb = np.bincount(codes, np.repeat(gm, F), self.n_bins)
        Hb = np.bincount(codes, np.repeat(hm, F), self.n_bins)
        Cb = np.bincount(codes, minlength=self.n_bins)
        GL, HL = self._left_sums(Gb), self._left_sums(Hb)
        CL = self._left_sums(Cb)
        GR, HR = G - GL, H - HL
        ok = (self.not_last & (CL > 0) & (CL < count)
              & (HL >= self.min_child_weight) & (HR >= self.min_child_weight))
        with np.errstate(divide="ignore", invalid="ignore"):  # masked bins may be 0/0
            gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))
        gain = np.where(ok, gain, -np.inf)
        # bins are feature-major, so ties resolve to the lowest feature, then threshold
        k = int(np.argmax(gain))
        best_gain = gain[k]
        if not np.isfinite(best_gain) or best_gain <= 0.0:
            return None
        f = int(self.bin_feature[k])
        # an empty bin repeats the previous partition, so bin k is occupied
        nxt = k + 1 + int(np.flatnonzero(Cb[k + 1:] > 0)[0])
        threshold = 0.5 * (self.bin_value[k] + self.bin_value[nxt])
        left = members & (self.X[:, f] < threshold)
        return Split(f, float(threshold), float(best_gain), left)


def fit_tree(finder: SplitFinder, g, h, max_depth: int) -> Tree:
    if not np.any(h):
        raise BoostingError("all Hessian entries are zero")
    tree = Tree()
    lam = finder.reg_lambda

    def grow(members, depth):
        G, H = g[members].sum(), h[members].sum()
        split = finder.best(g, h, members) if depth < max_depth else None
        if split is None:
            return tree.add_leaf(float(-G / (H + lam)))
        node = tree._add(split.feature, split.threshold, -1, -1, math.nan)
        tree.left[node] = grow(split.left_mask, depth + 1)
        tree.right[node] = grow(members & ~split.left_mask, depth + 1)
        return node

    grow(np.ones(g.shape[0], dtype=bool), 0)
    return tree


def base_margin(y) -> float:
    p = float(np.clip(np.mean(y), 1e-6, 1 - 1e-6))
    return math.log(p / (1.0 - p))


class Booster:
    """Incremental booster: one tree per :meth:`step`.

    ``loss_fn(scores)`` must return margin-space derivatives for the training
    rows. Extra feature matrices passed as ``tracked`` get their margins
    updated alongside the training margins.
    """

    space = "margin"

    def __init__(self, X, y, config: GBTConfig = GBTConfig(), tracked=None, base_score=None):
        self.X = np.asarray(X, float)
        self.config = config
        self.finder = SplitFinder(self.X, config.reg_lambda, config.min_child_weight)
        base = base_margin(y) if base_score is None else float(base_score)
        self.ensemble = TreeEnsemble(base, config.eta, config.reg_lambda, config.max_depth)
        self.scale = float(self.X.shape[0] if config.objective_scale is None
                           else config.objective_scale)
        self._margin = np.full(self.X.shape[0], base)
        self._tracked = {k: (np.asarray(v, float), np.full(len(v), base))
                         for k, v in (tracked or {}).items()}

    @property
    def n_rounds(self) -> int:
        return len(self.ensemble.trees)

    def scores(self, which: str = "train") -> np.ndarray:
        if which == "train":
            return sigmoid(self._margin)
        return sigmoid(self._tracked[which][1])

    def step(self, loss_fn: Callable[[np.ndarray], LossBundle]) -> LossBundle:
        bundle = loss_fn(self.scores())
        g = self.scale * bundle.grad
        h = self.scale * bundle.hess
        tree = fit_tree(self.finder, g, h, self.config.max_depth)
        self.ensemble.trees.append(tree)
        eta = self.config.eta
        self._margin += eta * np.asarray(tree.value)[tree.apply(self.X)]
        for X_t, m in self._tracked.values():
            m += eta * tree.predict(X_t)
        return bundle

    def model(self) -> TreeEnsemble:
        e = self.ensemble
        return TreeEnsemble(e.base_score, e.eta, e.reg_lambda, e.max_depth, list(e.trees))


def train_gbt(train, loss_fn, config: GBTConfig = GBTConfig(),
              stop: StoppingRule = StoppingRule(patience=5), monitor=None) -> TreeEnsemble:
    """Boost until ``monitor()`` stops improving (default: the training loss)."""
    booster = Booster(train.features, train.y, config)
    tracker = stop.tracker()
    cap = min(stop.max_steps, config.max_rounds)
    while booster.n_rounds < cap:
        booster.step(loss_fn)
        value = loss_fn(booster.scores()).value if monitor is None else monitor(booster)
        if tracker.update(value):
            break
    return booster.model()


# -- text serialization -------------------------------------------------------

def save_ensemble(model: TreeEnsemble, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# base_score={model.base_score!r} eta={model.eta!r} "
                 f"reg_lambda={model.reg_lambda!r} max_depth={model.max_depth}\n")
        w = csv.writer(fh)
        w.writerow(["tree", "node", "feature", "threshold", "left", "right", "value"])
        for t, tree in enumerate(model.trees):
            for k in range(len(tree.feature)):
                w.writerow([t, k, tree.feature[k], repr(float(tree.threshold[k])),
                            tree.left[k], tree.right[k], repr(float(tree.value[k]))])


def load_ensemble(path) -> TreeEnsemble:
    with Path(path).open(newline="") as fh:
        header = fh.readline().lstrip("# ").split()
        meta = dict(kv.split("=", 1) for kv in header)
        rows = list(csv.DictReader(fh))
    model = TreeEnsemble(float(meta["base_score"]), float(meta["eta"]),
                         float(meta["reg_lambda"]), int(meta["max_depth"]))
    for r in rows:
        t = int(r["tree"])
        while len(model.trees) <= t:
            model.trees.append(Tree())
        model.trees[t]._add(int(r["feature"]), float(r["threshold"]), int(r["left"]),
                            int(r["right"]), float(r["value"]))
    return model
