from .algorithm import (
    PpoConfig,
    RolloutBatch,
    TrainingError,
    TrainResult,
    adapt_beta,
    advantage,
    collect_rollouts,
    critic_loss,
    evaluate,
    surrogate_loss,
    train,
)
from .mlp import Mlp
from .optim import AdamConstants, AdamState, adam_update
from .policy import GaussianPolicy, ValueNet, gaussian_kl, kl_divergence

__all__ = [
    "AdamConstants",
    "AdamState",
    "GaussianPolicy",
    "Mlp",
    "PpoConfig",
    "RolloutBatch",
    "TrainResult",
    "TrainingError",
    "ValueNet",
    "adam_update",
    "adapt_beta",
    "advantage",
    "collect_rollouts",
    "critic_loss",
    "evaluate",
    "gaussian_kl",
    "kl_divergence",
    "surrogate_loss",
    "train",
]
