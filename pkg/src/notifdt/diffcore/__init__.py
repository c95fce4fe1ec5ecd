"""Minimal reverse-mode autodiff substrate for the decision model.

Exact gradients over numpy arrays; fused row-wise kernels run on a compiled
backend when available (see :mod:`notifdt.diffcore.kernels`).
"""

from . import kernels, ops
from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .gradcheck import GradCheckResult, check_gradients
from .optim import Adam
from .tensor import (
    DiffcoreError,
    GraphError,
    ShapeError,
    Tensor,
    backward,
    constant,
    param,
    zero_grad,
)

__all__ = [
    "Adam",
    "CheckpointError",
    "DiffcoreError",
    "GradCheckResult",
    "GraphError",
    "ShapeError",
    "Tensor",
    "backward",
    "check_gradients",
    "constant",
    "kernels",
    "ops",
    "param",
    "read_checkpoint",
    "write_checkpoint",
    "zero_grad",
]
