"""Minimal dense autodiff, optimiser and losses."""
from .linalg import spectral_norm_estimate
from .losses import accuracy, softmax_cross_entropy
from .modules import MLP, Linear, glorot_uniform
from .optim import Adam, AdamState, adam_step, clip_grad_norm, grad_norm, l2_penalty
from .tensor import (
    Tape,
    Tensor,
    add,
    backward,
    current_tape,
    dropout,
    frobenius_norm,
    gather_rows,
    matmul,
    mul,
    relu,
    row_concat,
    scale,
    scatter_rows,
    spmm,
    square_sum,
    sub,
    sum_all,
)

__all__ = [
    "Tape", "Tensor", "backward", "current_tape",
    "add", "sub", "mul", "scale", "matmul", "relu", "dropout", "row_concat",
    "scatter_rows", "gather_rows", "spmm", "sum_all", "square_sum", "frobenius_norm",
    "softmax_cross_entropy", "accuracy",
    "Adam", "AdamState", "adam_step", "clip_grad_norm", "grad_norm", "l2_penalty",
    "spectral_norm_estimate", "Linear", "MLP", "glorot_uniform",
]
