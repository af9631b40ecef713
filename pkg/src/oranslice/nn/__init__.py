from .checkpoint import CheckpointError, file_digest, load_checkpoint, save_checkpoint
from .core import (
    AdamState,
    DenseNet,
    NumericalError,
    adam_step,
    backward,
    check_finite,
    forward,
    huber,
    kl_gaussian,
    kl_gaussian_grad,
    mse,
    reparameterize,
    reparameterize_backward,
    sigmoid,
)

__all__ = [
    "AdamState", "CheckpointError", "DenseNet", "NumericalError", "adam_step", "backward",
    "check_finite", "file_digest", "forward", "huber", "kl_gaussian", "kl_gaussian_grad",
    "load_checkpoint", "mse", "reparameterize", "reparameterize_backward", "save_checkpoint",
    "sigmoid",
]
