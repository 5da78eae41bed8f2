"""Standard differentiable layers built on the autodiff primitives."""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tensor, softmax


def linear_apply(x: Tensor, weight: Parameter, bias: Parameter | None = None) -> Tensor:
    """Affine map x @ weight + bias for 2-D x."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ValueError(
            f"linear_apply shape mismatch: input {x.shape} vs weight {weight.shape}"
        )
    out = x @ weight
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ValueError(
                f"linear_apply bias shape {bias.shape} does not match weight {weight.shape}"
            )
        out = out + bias
    return out


def softmax_rows(logits: Tensor, additive_bias: Tensor | None = None) -> Tensor:
    """Row-stochastic softmax of logits (+ optional additive bias)."""
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    if additive_bias is not None:
        logits = logits + additive_bias
    return softmax(logits)


def layer_norm(x: Tensor, gain: Parameter, shift: Parameter, eps: float = 1e-5) -> Tensor:
    """Per-row normalization to zero mean / unit variance, then affine."""
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    normed = centered * (var + eps) ** -0.5
    return normed * gain + shift


def dropout_mask(shape, rate: float, rng: np.random.Generator, training: bool = True) -> np.ndarray:
    """Inverted-dropout mask: entries 0 or 1/(1-rate); all ones in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)
