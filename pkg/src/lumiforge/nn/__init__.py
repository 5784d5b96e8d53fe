"""Tensor engine, layers, the EPI network, trainer, and checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    DIRECTIONS,
    ParamStore,
    conv_lstm_step,
    directional_scan,
    he_uniform,
    lstm_bias_init,
    lstm_hidden_init,
    lstm_input_init,
)
from .network import (
    Model,
    NetworkSpec,
    bicubic_upsample,
    build_model,
    infer_epi,
    infer_epi_batch,
    upsample_base,
)
from .tensor import Tensor, backward
from .train import Adam, TrainConfig, TrainLog, masked_mse, train

__all__ = [
    "Adam",
    "DIRECTIONS",
    "Model",
    "NetworkSpec",
    "ParamStore",
    "Tensor",
    "TrainConfig",
    "TrainLog",
    "backward",
    "bicubic_upsample",
    "build_model",
    "conv_lstm_step",
    "directional_scan",
    "he_uniform",
    "infer_epi",
    "infer_epi_batch",
    "load_checkpoint",
    "lstm_bias_init",
    "lstm_hidden_init",
    "lstm_input_init",
    "masked_mse",
    "save_checkpoint",
    "train",
    "upsample_base",
]
