from .tensor import Tensor, backward, no_grad, topo_order
from .adam import AdamState, adam_step
from .spectral import SpectralNormState, init_spectral_state, spectral_normalize
from .gradcheck import grad_check
from . import ops

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "topo_order",
    "AdamState",
    "adam_step",
    "SpectralNormState",
    "init_spectral_state",
    "spectral_normalize",
    "grad_check",
    "ops",
]
