from .autograd import Tensor, no_grad, take_rows
from .model import (
    EmaState,
    ForwardTrace,
    ModelState,
    backward,
    cfg_guide,
    condition,
    decode_head,
    ema_update,
    forward,
    gradients,
    init_model,
    param_specs,
    patchify,
    unpatchify,
)

__all__ = [
    "EmaState",
    "ForwardTrace",
    "ModelState",
    "Tensor",
    "backward",
    "cfg_guide",
    "condition",
    "decode_head",
    "ema_update",
    "forward",
    "gradients",
    "init_model",
    "no_grad",
    "param_specs",
    "patchify",
    "take_rows",
    "unpatchify",
]
