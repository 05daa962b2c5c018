"""Losses, optimizer, checkpoints, dataset reading and the training loop."""

from avatar_fields.train.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from avatar_fields.train.dataset import Dataset, Frame, load_dataset
from avatar_fields.train.losses import (
    LossParts,
    loss_color,
    loss_eikonal,
    loss_mask,
    loss_normal_reg,
    total_loss,
)
from avatar_fields.train.loop import compute_losses, sample_pixels, train_loop
from avatar_fields.train.optim import AdamState, adam_step, lr_schedule

__all__ = [
    "AdamState",
    "Checkpoint",
    "Dataset",
    "Frame",
    "LossParts",
    "adam_step",
    "compute_losses",
    "load_checkpoint",
    "load_dataset",
    "loss_color",
    "loss_eikonal",
    "loss_mask",
    "loss_normal_reg",
    "lr_schedule",
    "sample_pixels",
    "save_checkpoint",
    "total_loss",
    "train_loop",
]
