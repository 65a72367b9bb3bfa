"""Neural-network training with per-layer gradient amplification."""
from .autograd import (Kind, Tensor, attach_grad_transform, backward, check_mode,
                       clear_grad_transforms, finite_diff_grad, no_grad, sgd_step)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "Kind", "Tensor", "attach_grad_transform", "backward", "check_mode", "clear_grad_transforms",
    "finite_diff_grad", "no_grad", "sgd_step", "BACKEND",
]
