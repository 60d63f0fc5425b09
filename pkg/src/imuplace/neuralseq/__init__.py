"""Minimal autodiff engine and the biRNN / transformer-encoder pose regressors."""

from imuplace.neuralseq.layers import (
    bilstm_forward,
    encoder_layer,
    linear,
    mse_loss,
    multi_head_attention,
    positional_encoding,
)
from imuplace.neuralseq.model import (
    OUTPUT_DIM,
    Checkpoint,
    ModelSpec,
    desk_spec,
    init_params,
    load_checkpoint,
    model_forward,
    param_shapes,
    save_checkpoint,
)
from imuplace.neuralseq.tensor import Tensor, no_grad
from imuplace.neuralseq.train import (
    TrainConfig,
    dataset_mse,
    gradient_check,
    make_windows,
    predict_windows,
    train,
)

__all__ = [
    "OUTPUT_DIM", "Checkpoint", "ModelSpec", "Tensor", "TrainConfig",
    "bilstm_forward", "dataset_mse", "desk_spec", "encoder_layer", "gradient_check",
    "init_params", "linear", "load_checkpoint", "make_windows", "model_forward",
    "mse_loss", "multi_head_attention", "no_grad", "param_shapes",
    "positional_encoding", "predict_windows", "save_checkpoint", "train",
]
