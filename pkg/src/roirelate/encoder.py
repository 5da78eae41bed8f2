"""Transformer encoder with relation-biased, adaptively decayed attention.

Per head, attention weights are

    A o softmax(Q K^T / sqrt(d_k) + P)

with P the aggregated pairwise-relation bias (shared across heads within
a layer, trainable through its 6->1 projection) and A the adaptive decay
matrix (identical for every layer and head, no gradient). The rows are
deliberately NOT renormalized after the elementwise product: attention
mass decays for distant or masked pairs and the residual path keeps the
token alive.

Blocks are pre-norm: x + Attn(LN(x)), then x + FF(LN(x)), GELU in the
feed-forward, dropout active only in training mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn.autodiff import Parameter, Tensor, concat, stop_gradient
from .nn.layers import dropout_mask, layer_norm, linear_apply, softmax_rows
from .relations import CHANNELS, RelationTensor, aggregate_bias


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 6
    heads: int = 4
    model_dim: int = 108
    ff_dim: int | None = None  # defaults to 4 * model_dim
    dropout: float = 0.1

    def __post_init__(self):
        if self.layers < 0:
            raise ValueError(f"layers must be >= 0, got {self.layers}")
        if self.model_dim % self.heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by heads {self.heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def hidden_dim(self) -> int:
        return self.ff_dim if self.ff_dim is not None else 4 * self.model_dim

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


@dataclass
class EncoderLayerParams:
    wq: Parameter
    bq: Parameter
    wk: Parameter
    bk: Parameter
    wv: Parameter
    bv: Parameter
    wo: Parameter
    bo: Parameter
    rel_w: Parameter
    rel_b: Parameter
    ln1_gain: Parameter
    ln1_shift: Parameter
    ln2_gain: Parameter
    ln2_shift: Parameter
    ff1_w: Parameter
    ff1_b: Parameter
    ff2_w: Parameter
    ff2_b: Parameter

    def named(self, prefix: str) -> dict[str, Parameter]:
        return {f"{prefix}.{k}": v for k, v in vars(self).items()}


def init_layer_params(config: EncoderConfig, rng: np.random.Generator, index: int) -> EncoderLayerParams:
    d = config.model_dim
    hd = config.hidden_dim

    def weight(fan_in, fan_out, name):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        return Parameter(w, name=f"layer{index}.{name}")

    def zeros(shape, name):
        return Parameter(np.zeros(shape), name=f"layer{index}.{name}")

    # The relation projection starts as a locality prior (down-weight
    # distant pairs) instead of zero: the bias is then informative from
    # the first step and training refines it.
    rel_init = np.zeros((len(CHANNELS), 1))
    rel_init[CHANNELS.index("dist"), 0] = -4.0

    return EncoderLayerParams(
        wq=weight(d, d, "wq"), bq=zeros(d, "bq"),
        wk=weight(d, d, "wk"), bk=zeros(d, "bk"),
        wv=weight(d, d, "wv"), bv=zeros(d, "bv"),
        wo=weight(d, d, "wo"), bo=zeros(d, "bo"),
        rel_w=Parameter(rel_init, name=f"layer{index}.rel_w"),
        rel_b=zeros(1, "rel_b"),
        ln1_gain=Parameter(np.ones(d), name=f"layer{index}.ln1_gain"),
        ln1_shift=zeros(d, "ln1_shift"),
        ln2_gain=Parameter(np.ones(d), name=f"layer{index}.ln2_gain"),
        ln2_shift=zeros(d, "ln2_shift"),
        ff1_w=weight(d, hd, "ff1_w"), ff1_b=zeros(hd, "ff1_b"),
        ff2_w=weight(hd, d, "ff2_w"), ff2_b=zeros(d, "ff2_b"),
    )


def init_encoder_params(config: EncoderConfig, rng: np.random.Generator) -> list[EncoderLayerParams]:
    return [init_layer_params(config, rng, i) for i in range(config.layers)]


def _as_constant(value) -> np.ndarray | None:
    """Decay matrices never carry gradient, whatever they arrive as."""
    if value is None:
        return None
    if isinstance(value, Tensor):
        return stop_gradient(value).data
    return np.asarray(value)


def modified_attention(
    tokens: Tensor,
    bias: Tensor | None,
    decay: np.ndarray | Tensor | None,
    layer: EncoderLayerParams,
    config: EncoderConfig,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    """Multi-head attention with additive bias P and multiplicative decay A.

    bias and decay are N x N, shared across heads; rows are not
    renormalized after the decay product.
    """
    n, d = tokens.shape
    dk = config.head_dim
    scale = 1.0 / np.sqrt(dk)
    decay_const = _as_constant(decay)

    q = linear_apply(tokens, layer.wq, layer.bq)
    k = linear_apply(tokens, layer.wk, layer.bk)
    v = linear_apply(tokens, layer.wv, layer.bv)

    drop = None
    if training and config.dropout > 0.0:
        drop = dropout_mask((config.heads, n, n), config.dropout, rng, training=True)

    head_outputs = []
    for h in range(config.heads):
        cols = slice(h * dk, (h + 1) * dk)
        qh = q[:, cols]
        kh = k[:, cols]
        vh = v[:, cols]
        scores = (qh @ kh.T) * scale
        weights = softmax_rows(scores, additive_bias=bias)
        if decay_const is not None:
            weights = weights * decay_const
        if drop is not None:
            weights = weights * drop[h]
        head_outputs.append(weights @ vh)
    merged = concat(head_outputs, axis=1)
    return linear_apply(merged, layer.wo, layer.bo)


def encoder_forward(
    tokens: Tensor,
    relations: RelationTensor | None,
    decay: np.ndarray | Tensor | None,
    config: EncoderConfig,
    layers: list[EncoderLayerParams],
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    """Stack of pre-norm encoder blocks; identity when config.layers = 0.

    Each layer aggregates its own attention bias from the shared
    relation tensor; the decay matrix is computed once by the caller and
    reused by every layer.
    """
    if len(layers) != config.layers:
        raise ValueError(f"expected {config.layers} layer params, got {len(layers)}")
    x = tokens
    n = tokens.shape[0]
    for layer in layers:
        bias = None
        if relations is not None:
            bias = aggregate_bias(relations, layer.rel_w, layer.rel_b).values
        normed = layer_norm(x, layer.ln1_gain, layer.ln1_shift)
        attn = modified_attention(normed, bias, decay, layer, config, rng, training)
        if training and config.dropout > 0.0:
            attn = attn * dropout_mask((n, config.model_dim), config.dropout, rng, True)
        x = x + attn
        normed = layer_norm(x, layer.ln2_gain, layer.ln2_shift)
        hidden = linear_apply(normed, layer.ff1_w, layer.ff1_b).gelu()
        ff = linear_apply(hidden, layer.ff2_w, layer.ff2_b)
        if training and config.dropout > 0.0:
            ff = ff * dropout_mask((n, config.model_dim), config.dropout, rng, True)
        x = x + ff
    return x
