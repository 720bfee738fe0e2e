"""Deep branch: residual 1-D conv net, losses, training loop, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .losses import bce_loss, mae_loss, make_element_weights, task_loss
from .model import NetConfig, ResidualNet, forward, prepare_waveform
from .train import (Adam, Batch, TrainSchedule, TrainState, export_history_csv,
                    gradients, predict_in_batches, train_model)

__all__ = [
    "Adam", "Batch", "NetConfig", "ResidualNet", "TrainSchedule", "TrainState",
    "bce_loss", "export_history_csv", "forward", "gradients", "load_checkpoint",
    "mae_loss", "make_element_weights", "predict_in_batches", "prepare_waveform",
    "save_checkpoint", "task_loss", "train_model",
]
