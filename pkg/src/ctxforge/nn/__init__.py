from .adam import AdamState, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import BatchNormState, batchnorm_apply
from .model import ARCHITECTURES, ModelSpec, Network, model_spec
from .tensor import Tensor

__all__ = [
    "ARCHITECTURES",
    "AdamState",
    "BatchNormState",
    "ModelSpec",
    "Network",
    "Tensor",
    "adam_step",
    "batchnorm_apply",
    "load_checkpoint",
    "model_spec",
    "save_checkpoint",
]
