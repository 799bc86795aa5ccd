"""Gated ensemble regression for reaction stereoselectivity (ΔΔG‡) prediction.

Base learners (LASSO, CART, random forest, AdaBoost.R2) are combined by two
Gaussian-mixture density gates that pick one predictor per reaction.
"""

from stereogate.dataset import (
    ROLES,
    Dataset,
    DatasetError,
    FeatureSchema,
    ReactionRecord,
    SplitPlan,
    kfold_plan,
    leave_one_type_out_plan,
    load_dataset,
    select_features,
    write_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "ROLES",
    "Dataset",
    "DatasetError",
    "FeatureSchema",
    "ReactionRecord",
    "SplitPlan",
    "kfold_plan",
    "leave_one_type_out_plan",
    "load_dataset",
    "select_features",
    "write_dataset",
]
