from .autodiff import Tensor, concat, minimum, tensor
from .history import ObservationHistory
from .models import (
    MLP,
    Linear,
    PolicyParams,
    actor_forward,
    actor_forward_np,
    critic_forward,
    critic_forward_np,
    gaussian_entropy,
    gaussian_log_prob,
    gaussian_log_prob_np,
    prpn_forward,
    prpn_forward_np,
)

__all__ = [
    "Tensor", "tensor", "concat", "minimum",
    "ObservationHistory",
    "MLP", "Linear", "PolicyParams",
    "prpn_forward", "prpn_forward_np",
    "actor_forward", "actor_forward_np",
    "critic_forward", "critic_forward_np",
    "gaussian_log_prob", "gaussian_log_prob_np", "gaussian_entropy",
]
