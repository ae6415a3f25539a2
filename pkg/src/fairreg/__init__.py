"""Fairness-regularized binary classifiers: statistical-parity and causal direct-effect penalties."""

__version__ = "0.1.0"

from .datasets import Dataset, generate_synthetic, load_adult  # noqa: E402
from .losses import LossBundle, bce, cde_reg, combine, spd_reg, to_margin_space  # noqa: E402
from .pipeline import Experiment, ExperimentConfig  # noqa: E402
from .propensity import PropensityModel, fit_propensity, predict_propensity  # noqa: E402
from .schedule import AnnealPlan, anneal_train, lambda_grid, sweep  # noqa: E402

__all__ = [
    "Dataset", "generate_synthetic", "load_adult", "LossBundle", "bce", "cde_reg", "combine",
    "spd_reg", "to_margin_space", "Experiment", "ExperimentConfig", "PropensityModel",
    "fit_propensity", "predict_propensity", "AnnealPlan", "anneal_train", "lambda_grid", "sweep",
]
