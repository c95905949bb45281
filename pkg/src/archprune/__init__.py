"""Architecture pruning with a two-temperature sigmoid relaxation of binary masks."""

from .baselines import (
    imp_prune,
    layerwise_density,
    layerwise_reshuffle,
    load_mask,
    random_prune,
    save_mask,
)
from .data import Dataset, balanced_subsample, binary_task, class_task, load_cifar, load_mnist
from .models import Batch, LayerPartition, MaskedLogistic, MaskedMLP, load_checkpoint, save_checkpoint
from .optimizer import (
    TrainState,
    TwoTempConfig,
    ap_step,
    check_freeze,
    empirical_bound_check,
    lr_schedule,
    run_ap,
    run_ap_to_target,
)
from .relaxation import (
    BoundParams,
    TempPair,
    bound_constant_C,
    convergence_bound,
    g_max,
    harden_mask,
    relax_mask,
    two_temp_grad,
)
from .transfer import TransferConfig, TransferReport, evaluate_accuracy, fine_tune, transfer_experiment

__version__ = "0.1.0"

__all__ = [
    "ap_step",
    "balanced_subsample",
    "Batch",
    "binary_task",
    "bound_constant_C",
    "BoundParams",
    "check_freeze",
    "class_task",
    "convergence_bound",
    "Dataset",
    "empirical_bound_check",
    "evaluate_accuracy",
    "fine_tune",
    "g_max",
    "harden_mask",
    "imp_prune",
    "LayerPartition",
    "layerwise_density",
    "layerwise_reshuffle",
    "load_checkpoint",
    "load_cifar",
    "load_mask",
    "load_mnist",
    "lr_schedule",
    "MaskedLogistic",
    "MaskedMLP",
    "random_prune",
    "relax_mask",
    "run_ap",
    "run_ap_to_target",
    "save_checkpoint",
    "save_mask",
    "TempPair",
    "TrainState",
    "transfer_experiment",
    "TransferConfig",
    "TransferReport",
    "two_temp_grad",
    "TwoTempConfig",
]
