"""Datasets: container type, synthetic causal generator, UCI Adult ingestion
and preprocessing (one-hot encoding, standardization, splits)."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

ROLES = ("safe", "indirect", "proxy", "real-data")


class DatasetError(ValueError):
    """Raised when a dataset violates its invariants."""


class AdultParseError(ValueError):
    """Malformed row in a UCI Adult file."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    y: np.ndarray
    z: np.ndarray
    feature_names: list[str]
    feature_roles: Optional[list[str]] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {X.shape}")
        y = np.asarray(self.y).astype(np.int8)
        z = np.asarray(self.z).astype(np.int8)
        n = X.shape[0]
        if y.shape != (n,) or z.shape != (n,):
            raise DatasetError("y and z must be vectors with one entry per row")
        if not (np.isin(y, (0, 1)).all() and np.isin(z, (0, 1)).all()):
            raise DatasetError("y and z must be binary")
        if n and (z.min() == z.max()):
            raise DatasetError("both protected groups must be present")
        if len(self.feature_names) != X.shape[1]:
            raise DatasetError("feature_names length does not match the feature count")
        if self.feature_roles is not None:
            if len(self.feature_roles) != len(self.feature_names):
                raise DatasetError("feature_roles length does not match feature_names")
            bad = set(self.feature_roles) - set(ROLES)
            if bad:
                raise DatasetError(f"unknown feature roles {sorted(bad)}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "feature_names", list(self.feature_names))
        if self.feature_roles is not None:
            object.__setattr__(self, "feature_roles", list(self.feature_roles))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        return replace(self, features=self.features[rows], y=self.y[rows], z=self.z[rows])

    def columns_with_role(self, role: str) -> np.ndarray:
        if self.feature_roles is None:
            return np.array([], dtype=int)
        return np.array([i for i, r in enumerate(self.feature_roles) if r == role], dtype=int)


def label_spd(ds: Dataset) -> float:
    """Statistical parity difference of the observed labels."""
    return abs(ds.y[ds.z == 1].mean() - ds.y[ds.z == 0].mean())


# -- synthetic data -----------------------------------------------------------

def generate_synthetic(n_rows: int, seed: int, n_safe: int = 10, n_indirect: int = 4,
                       n_proxy: int = 2, p_protected: float = 0.5) -> Dataset:
    """Sample from the mediation graph Z -> X -> Y, Z -> Y.

    Safe columns are N(0, 1); indirect-effect and proxy columns are N(Z, 1).
    The label log-odds are ``0.25 * (sum(indirect) + sum(safe)) + 1.25 * Z``,
    so proxies carry information about Z but have no effect on Y.
    """
    if not isinstance(n_rows, (int, np.integer)) or n_rows < 1:
        raise ValueError(f"n_rows must be a positive integer, got {n_rows!r}")
    rng = np.random.default_rng(seed)
    z = (rng.random(n_rows) < p_protected).astype(np.int8)
    safe = rng.standard_normal((n_rows, n_safe))
    indirect = rng.standard_normal((n_rows, n_indirect)) + z[:, None]
    proxy = rng.standard_normal((n_rows, n_proxy)) + z[:, None]
    log_odds = 0.25 * (indirect.sum(axis=1) + safe.sum(axis=1)) + 1.25 * z
    y = (rng.random(n_rows) < 1.0 / (1.0 + np.exp(-log_odds))).astype(np.int8)

    features = np.hstack([safe, indirect, proxy])
    names = ([f"safe_{i}" for i in range(n_safe)]
             + [f"indirect_{i}" for i in range(n_indirect)]
             + [f"proxy_{i}" for i in range(n_proxy)])
    roles = ["safe"] * n_safe + ["indirect"] * n_indirect + ["proxy"] * n_proxy
    return Dataset(features, y, z, names, roles)


def synthetic_group_means(n_safe: int = 10, n_indirect: int = 4, n_nodes: int = 80):
    """E[Y | Z=z] for the synthetic generator by Gauss-Hermite quadrature.

    Given Z, the label log-odds are Gaussian with mean ``0.25*n_indirect*z + 1.25*z``
    and variance ``0.0625*(n_safe + n_indirect)``, so a one-dimensional rule
    integrates the sigmoid exactly enough.
    """
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    weights = weights / weights.sum()
    sd = 0.25 * math.sqrt(n_safe + n_indirect)
    out = []
    for z in (0, 1):
        mu = 0.25 * n_indirect * z + 1.25 * z
        out.append(float(np.sum(weights / (1.0 + np.exp(-(mu + sd * nodes))))))
    return tuple(out)


# -- UCI Adult ----------------------------------------------------------------

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]
ADULT_DROPPED = ("fnlwgt", "marital-status", "relationship", "race", "native-country")
ADULT_NUMERIC = ("age", "education-num", "capital-gain", "capital-loss", "hours-per-week")
ADULT_CATEGORICAL = ("workclass", "education", "occupation")
ADULT_PROTECTED = "sex"
ADULT_PRIVILEGED = "Male"


def _read_adult_rows(path: Path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Adult file not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("|"):
                continue
            fields = [f.strip() for f in next(csv.reader([line], skipinitialspace=True))]
            if len(fields) != len(ADULT_COLUMNS):
                raise AdultParseError(path, line_no,
                                      f"expected {len(ADULT_COLUMNS)} fields, got {len(fields)}")
            rec = dict(zip(ADULT_COLUMNS, fields))
            label = rec["income"].rstrip(".")
            if label not in (">50K", "<=50K"):
                raise AdultParseError(path, line_no, f"unknown income label {rec['income']!r}")
            rec["income"] = label
            for col in ADULT_NUMERIC:
                try:
                    rec[col] = float(rec[col])
                except ValueError:
                    raise AdultParseError(path, line_no,
                                          f"non-numeric {col} value {rec[col]!r}") from None
            rows.append(rec)
    if not rows:
        raise AdultParseError(path, 0, "no data rows")
    return rows


def _encode_adult(rows, categories):
    n = len(rows)
    names = list(ADULT_NUMERIC)
    blocks = [np.array([[r[c] for c in ADULT_NUMERIC] for r in rows], dtype=float)]
    for col in ADULT_CATEGORICAL:
        levels = categories[col]
        index = {lvl: j for j, lvl in enumerate(levels)}
        block = np.zeros((n, len(levels)))
        for i, r in enumerate(rows):
            j = index.get(r[col])
            if j is not None:  # unseen category -> all-zero block
                block[i, j] = 1.0
        blocks.append(block)
        names.extend(f"{col}={lvl}" for lvl in levels)
    X = np.hstack(blocks)
    y = np.array([r["income"] == ">50K" for r in rows], dtype=np.int8)
    z = np.array([r[ADULT_PROTECTED] == ADULT_PRIVILEGED for r in rows], dtype=np.int8)
    return Dataset(X, y, z, names, ["real-data"] * len(names))


def load_adult(train_path, test_path) -> tuple[Dataset, Dataset]:
    """Load the official UCI Adult train/test files.

    Gender becomes the protected attribute (1 = male). Race, marital status,
    native country, relationship and the ``fnlwgt`` sampling weight are dropped;
    workclass, education and occupation are one-hot encoded with categories
    learned from the training file ("?" is its own category).
    """
    train_rows = _read_adult_rows(train_path)
    test_rows = _read_adult_rows(test_path)
    categories = {c: sorted({r[c] for r in train_rows}) for c in ADULT_CATEGORICAL}
    return _encode_adult(train_rows, categories), _encode_adult(test_rows, categories)


def categorical_blocks(ds: Dataset) -> dict[str, np.ndarray]:
    """Map each one-hot prefix ``col=`` to its column indices."""
    blocks: dict[str, list[int]] = {}
    for j, name in enumerate(ds.feature_names):
        if "=" in name:
            blocks.setdefault(name.split("=", 1)[0], []).append(j)
    return {k: np.array(v) for k, v in blocks.items()}


# -- scaling ------------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    columns: list[str]
    mean: np.ndarray
    std: np.ndarray
    dropped: list[str] = field(default_factory=list)

    def to_dict(self):
        return {"columns": self.columns, "mean": self.mean.tolist(),
                "std": self.std.tolist(), "dropped": self.dropped}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["columns"]), np.asarray(d["mean"], float),
                   np.asarray(d["std"], float), list(d.get("dropped", [])))


def fit_scaler(train: Dataset) -> Scaler:
    X = train.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    keep = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    dropped = [n for n, k in zip(train.feature_names, keep) if not k]
    for name in dropped:
        logger.warning("dropping constant column %s", name)
    return Scaler([n for n, k in zip(train.feature_names, keep) if k],
                  mean[keep], std[keep], dropped)


def _scaler_index(scaler: Scaler, ds: Dataset):
    pos = {n: j for j, n in enumerate(ds.feature_names)}
    missing = [c for c in scaler.columns if c not in pos]
    if missing:
        raise DatasetError(f"dataset lacks scaled columns {missing}")
    return np.array([pos[c] for c in scaler.columns], dtype=int)


def apply_scaler(scaler: Scaler, ds: Dataset) -> Dataset:
    idx = _scaler_index(scaler, ds)
    X = (ds.features[:, idx] - scaler.mean) / scaler.std
    if not np.isfinite(X).all():
        raise DatasetError("non-finite values after scaling")
    roles = None if ds.feature_roles is None else [ds.feature_roles[j] for j in idx]
    return Dataset(X, ds.y, ds.z, list(scaler.columns), roles)


def inverse_scaler(scaler: Scaler, ds: Dataset) -> Dataset:
    X = ds.features * scaler.std + scaler.mean
    return replace(ds, features=X)


# -- splitting ----------------------------------------------------------------

def holdout_split(ds: Dataset, fraction: float = 0.33, seed: int = 123) -> tuple[Dataset, Dataset]:
    """Return ``(main, holdout)`` with ``floor(fraction * n)`` rows held out."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = ds.n_rows
    n_hold = int(math.floor(fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    hold_idx, main_idx = np.sort(perm[:n_hold]), np.sort(perm[n_hold:])
    parts = []
    for name, idx in (("main", main_idx), ("holdout", hold_idx)):
        z = ds.z[idx]
        if len(idx) == 0 or z.min() == z.max():
            raise DatasetError(f"{name} part has a single protected group; "
                               f"use a different seed or fraction")
        parts.append(ds.subset(idx))
    return parts[0], parts[1]


# -- on-disk format -----------------------------------------------------------

def write_csv(ds: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + ["y", "z"])
        for row, yi, zi in zip(ds.features, ds.y, ds.z):
            w.writerow([repr(float(v)) for v in row] + [int(yi), int(zi)])


def read_csv(path, feature_roles: Optional[Sequence[str]] = None) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        header = next(csv.reader(fh))
    if header[-2:] != ["y", "z"]:
        raise DatasetError(f"{path}: last two columns must be y, z")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Dataset(data[:, :-2], data[:, -2], data[:, -1], header[:-2],
                   None if feature_roles is None else list(feature_roles))


def write_manifest(path, ds: Dataset, scaler: Optional[Scaler] = None, **extra) -> None:
    doc = {"feature_names": ds.feature_names, "feature_roles": ds.feature_roles,
           "scaler": None if scaler is None else scaler.to_dict()}
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2))


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def save_splits(out_dir, train: Dataset, test: Dataset, scaler: Scaler, **extra) -> Path:
    """Write ``train.csv``, ``test.csv`` and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(train, out / "train.csv")
    write_csv(test, out / "test.csv")
    write_manifest(out / "manifest.json", train, scaler,
                   n_train=train.n_rows, n_test=test.n_rows, **extra)
    return out


def load_splits(data_dir) -> tuple[Dataset, Dataset, dict]:
    d = Path(data_dir)
    manifest = read_manifest(d / "manifest.json")
    roles = manifest.get("feature_roles")
    return read_csv(d / "train.csv", roles), read_csv(d / "test.csv", roles), manifest
