"""Manifold-aware WGAN-GP: networks, objective, targets and the training loop."""

from .networks import MLP, Adam, AdamState, adam_step, linear_decay, load_checkpoint, save_checkpoint
from .objective import (
    TangentSpace,
    critic_forward,
    critic_loss,
    generator_forward,
    generator_loss,
    gradient_penalty,
    sample_interpolates,
)
from .targets import PRESETS, SyntheticTarget, circle_mixture, spd_mixture, synth_targets, vmf_mixture
from .trainer import LOG_COLUMNS, Trainer, TrainerConfig, TrainingDiverged, TrainingLog, train

__all__ = [
    "MLP", "Adam", "AdamState", "adam_step", "linear_decay", "load_checkpoint", "save_checkpoint",
    "TangentSpace", "critic_forward", "critic_loss", "generator_forward", "generator_loss",
    "gradient_penalty", "sample_interpolates",
    "PRESETS", "SyntheticTarget", "circle_mixture", "spd_mixture", "synth_targets", "vmf_mixture",
    "LOG_COLUMNS", "Trainer", "TrainerConfig", "TrainingDiverged", "TrainingLog", "train",
]
