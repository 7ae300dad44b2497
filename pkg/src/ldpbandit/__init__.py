"""Nonparametric contextual bandits under local differential privacy.

Library plus CLI simulator: adaptive dyadic partitioning with successive arm
elimination driven by privatized statistics, jump-start transfer from
heterogeneous privatized auxiliary datasets, and a reproducible experiment
harness for synthetic and classification-derived bandit studies.
"""

from .environments import (
    BanditSample,
    ClassificationEnvironment,
    ClassificationRow,
    SourceSpec,
    SyntheticEnvSpec,
    SyntheticEnvironment,
)
from .estimation import DEFAULT_C_CONF, ArmCell, EstimatorConfig
from .harness import ExperimentConfig, run_experiment, run_single, run_sweep
from .partition import BinGeometry, BinId, PartitionTree, tau
from .policy import Policy, PolicyConfig, RunRecord, StructuralEvent, run_policy
from .privacy import PrivacyBudget, build_user_message, ldp_log_ratio

__version__ = "0.1.0"

__all__ = [
    "ArmCell",
    "BanditSample",
    "BinGeometry",
    "BinId",
    "ClassificationEnvironment",
    "ClassificationRow",
    "DEFAULT_C_CONF",
    "EstimatorConfig",
    "ExperimentConfig",
    "PartitionTree",
    "Policy",
    "PolicyConfig",
    "PrivacyBudget",
    "RunRecord",
    "SourceSpec",
    "StructuralEvent",
    "SyntheticEnvSpec",
    "SyntheticEnvironment",
    "build_user_message",
    "ldp_log_ratio",
    "run_experiment",
    "run_policy",
    "run_single",
    "run_sweep",
    "tau",
]
