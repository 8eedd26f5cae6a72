"""Minimal neural-network substrate: MLPs with exact gradients, the
adaptive-moment optimizer, target-network updates and checkpoint files.

The hot kernels have a compiled implementation and a pure-NumPy fallback;
see ``gcrl.nn.backend``.
"""

from gcrl.nn.backend import available_backends, kernel_backend
from gcrl.nn.params import (
    DEFAULT_HIDDEN,
    AdamState,
    NetworkParams,
    TargetParams,
    adam_init,
    adam_step,
    backward,
    backward_input,
    forward,
    forward_cache,
    init_network,
    load_checkpoint,
    polyak_update,
    save_checkpoint,
)

__all__ = [
    "DEFAULT_HIDDEN",
    "AdamState",
    "NetworkParams",
    "TargetParams",
    "adam_init",
    "adam_step",
    "available_backends",
    "backward",
    "backward_input",
    "forward",
    "forward_cache",
    "init_network",
    "kernel_backend",
    "load_checkpoint",
    "polyak_update",
    "save_checkpoint",
]
