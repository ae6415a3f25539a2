from .boosting import (Booster, BoostingError, GBTConfig, SplitFinder, Tree, TreeEnsemble,
                       fit_tree, load_ensemble, save_ensemble, train_gbt)
from .linear import (LinearDescent, LinearModel, TrainingError, baseline_logistic, load_linear,
                     save_linear, train_linear, zero_model)
from .stopping import EarlyStopper, StoppingRule

__all__ = [
    "Booster", "BoostingError", "GBTConfig", "SplitFinder", "Tree", "TreeEnsemble", "fit_tree",
    "load_ensemble", "save_ensemble", "train_gbt", "LinearDescent", "LinearModel",
    "TrainingError", "baseline_logistic", "load_linear", "save_linear", "train_linear",
    "zero_model", "EarlyStopper", "StoppingRule",
]
