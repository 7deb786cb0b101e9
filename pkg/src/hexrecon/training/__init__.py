"""Losses, Adam, differentiable rendering and the staged training loop."""

from .config import TrainConfig, format_config, load_config, parse_config
from .losses import LossWarning, loss_mask, loss_normal, loss_rgb
from .optim import AdamState, adam_step
from .render import Rendered, render_backward, render_forward
from .loop import (LOG_COLUMNS, Objective, TrainResult, loss_weights, objective, remesh_event,
                   total_loss, train, write_log)

__all__ = [
    "TrainConfig", "format_config", "load_config", "parse_config", "LossWarning", "loss_mask",
    "loss_normal", "loss_rgb", "AdamState", "adam_step", "Rendered", "render_backward",
    "render_forward", "LOG_COLUMNS", "Objective", "TrainResult", "loss_weights", "objective",
    "remesh_event", "total_loss", "train", "write_log",
]
