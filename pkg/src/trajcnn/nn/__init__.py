"""Minimal numpy layer engine with analytic gradients."""
from .functional import conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward
from .layers import (
    BatchNorm2d, Conv2d, ConvTranspose2d, GroupNorm, LeakyReLU, Linear, Module, ReLU,
    Reshape, Sequential, Sigmoid, Tanh, Tensor,
)
from .optim import Adam, adam_step, lr_scheduler_step
from .gradcheck import LayerSpec, build_layer, check_module, grad_check
from .checkpoint import load_into, read_checkpoint, save_checkpoint

__all__ = [
    "conv2d", "conv2d_backward", "conv_transpose2d", "conv_transpose2d_backward",
    "BatchNorm2d", "Conv2d", "ConvTranspose2d", "GroupNorm", "LeakyReLU", "Linear", "Module",
    "ReLU", "Reshape", "Sequential", "Sigmoid", "Tanh", "Tensor",
    "Adam", "adam_step", "lr_scheduler_step",
    "LayerSpec", "build_layer", "check_module", "grad_check",
    "load_into", "read_checkpoint", "save_checkpoint",
]
