from .nn import BatchNorm1d, Dropout, LayerNorm, Linear, Module, MultiHeadAttention, TransformerBlock
from .optim import AdamW, OptimizerError, OptimizerState
from .rng import RngStream
from .tensor import (
    BatchTooSmallError,
    LabelError,
    RankError,
    ShapeError,
    Tensor,
    batch_norm,
    bce_with_logits,
    gelu,
    layer_norm,
    matmul,
    no_grad,
    selu,
    sigmoid,
    softmax,
    softmax_cross_entropy,
)

__all__ = [
    "AdamW", "BatchNorm1d", "BatchTooSmallError", "Dropout", "LabelError", "LayerNorm", "Linear",
    "Module", "MultiHeadAttention", "OptimizerError", "OptimizerState", "RankError", "RngStream",
    "ShapeError", "Tensor", "TransformerBlock", "batch_norm", "bce_with_logits", "gelu",
    "layer_norm", "matmul", "no_grad", "selu", "sigmoid", "softmax", "softmax_cross_entropy",
]
