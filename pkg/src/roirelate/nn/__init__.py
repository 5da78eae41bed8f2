"""Minimal dense-tensor numeric core with reverse-mode differentiation."""

from .autodiff import (
    Parameter,
    Tensor,
    concat,
    log_softmax,
    no_grad,
    softmax,
    stop_gradient,
)
from .gradcheck import GradCheckReport, finite_diff_check
from .layers import dropout_mask, layer_norm, linear_apply, softmax_rows
from .optim import AdamW
from .rng import RNG_ALGORITHM, derive_seed, labeled_rng, seeded_rng

__all__ = [
    "AdamW",
    "GradCheckReport",
    "Parameter",
    "RNG_ALGORITHM",
    "Tensor",
    "concat",
    "derive_seed",
    "dropout_mask",
    "finite_diff_check",
    "labeled_rng",
    "layer_norm",
    "linear_apply",
    "log_softmax",
    "no_grad",
    "seeded_rng",
    "softmax",
    "softmax_rows",
    "stop_gradient",
]
