"""From-scratch segmentation network: ops, model, loss, optimiser, training."""
from .checkpoint import load_model, save_model
from .loss import weighted_bce, weighted_bce_grad
from .ops import ShapeError, conv2d, maxpool2, sigmoid, upsample_nearest2
from .optim import AdamState, OptimizerError, adam_step
from .train import TrainConfig, TrainHistory, TrainingError, patches_to_arrays, train
from .unet import StateError, UNetConfig, UNetModel, forward_patch

__all__ = [
    "AdamState", "OptimizerError", "ShapeError", "StateError", "TrainConfig", "TrainHistory",
    "TrainingError", "UNetConfig", "UNetModel", "adam_step", "conv2d", "forward_patch",
    "load_model", "maxpool2", "patches_to_arrays", "save_model", "sigmoid", "train",
    "upsample_nearest2", "weighted_bce", "weighted_bce_grad",
]
