import os
from pathlib import Path

import numpy as np
import pytest

from fairreg.datasets import apply_scaler, fit_scaler, generate_synthetic, holdout_split

ROOT = Path(__file__).resolve().parents[1]


def adult_dir():
    d = Path(os.environ.get("FAIRREG_ADULT_DIR", ROOT / "data" / "adult"))
    if (d / "adult.data").is_file() and (d / "adult.test").is_file():
        return d
    return None


@pytest.fixture(scope="session")
def adult_paths():
    d = adult_dir()
    if d is None:
        pytest.skip("UCI Adult files not found (set FAIRREG_ADULT_DIR)")
    return d / "adult.data", d / "adult.test"


@pytest.fixture(scope="session")
def small_synthetic():
    """Scaled synthetic train/test splits, small enough for unit tests."""
    ds = generate_synthetic(3000, seed=7)
    train, test = holdout_split(ds, 0.33, seed=7)
    sc = fit_scaler(train)
    return apply_scaler(sc, train), apply_scaler(sc, test)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        verdict = {"passed": "PASS", "failed": "FAIL"}.get(_ACCEPTANCE[name], "SKIP")
        tr.write_line(f"{verdict}  {name}")
