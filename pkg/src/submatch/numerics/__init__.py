from . import tensor as ops
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check, numeric_gradient
from .optim import ParamStore, adam_step
from .tensor import NonFiniteError, Tensor, no_grad

__all__ = [
    "ops",
    "Tensor",
    "NonFiniteError",
    "no_grad",
    "ParamStore",
    "adam_step",
    "grad_check",
    "numeric_gradient",
    "GradCheckReport",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]
