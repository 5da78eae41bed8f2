"""RoI tokens: per-proposal embeddings combining the RoI feature, the
preliminary class logits, learned size embeddings and a 2-D sinusoidal
positional encoding.

Token_i = (feature_i (+) logits_i (+) embed(w_i) (+) embed(h_i)) + pos(x_i, y_i)

where (+) is concatenation. The concatenation is zero-padded up to the
model dimension when the block sizes do not already sum to a multiple
of four (required by the positional encoding). Box-derived inputs (the
size scalars and the positional encoding) are constants for the
backward pass; the logits keep their gradient path into the
preliminary head.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import OrientedBox
from .nn.autodiff import Parameter, Tensor, concat, stop_gradient
from .nn.layers import linear_apply

_POS_BASE = 10000.0
# Normalized coordinates are mapped to [0, 2*pi] so the highest-frequency
# sin/cos band varies over the full scene.
_POS_SCALE = 2.0 * math.pi


def token_dim(feature_dim: int, num_logits: int, size_dim: int) -> int:
    """Model dimension: block sizes rounded up to a multiple of 4."""
    raw = feature_dim + num_logits + 2 * size_dim
    return raw + (-raw) % 4


def pos_encoding_2d(x: float, y: float, dim: int, extent: float) -> np.ndarray:
    """Sinusoidal 2-D position code: first dim/2 entries encode x, the
    rest encode y, each as interleaved sin/cos over geometric
    frequencies with base 10000. Coordinates are normalized by extent."""
    if dim % 4 != 0:
        raise ValueError(f"positional encoding dim must be divisible by 4, got {dim}")
    if extent <= 0:
        raise ValueError(f"extent must be positive, got {extent}")
    half = dim // 2
    k = np.arange(half // 2)
    freq = _POS_BASE ** (-2.0 * k / half)
    out = np.empty(dim)
    for offset, coord in ((0, x), (half, y)):
        t = coord / extent * _POS_SCALE * freq
        out[offset : offset + half : 2] = np.sin(t)
        out[offset + 1 : offset + half : 2] = np.cos(t)
    return out


def pos_encoding_rows(boxes: list[OrientedBox], dim: int, extent: float) -> np.ndarray:
    """Stacked pos_encoding_2d for every box center."""
    return np.stack([pos_encoding_2d(b.x, b.y, dim, extent) for b in boxes])


def build_tokens(
    features: np.ndarray,
    logits: Tensor,
    boxes: list[OrientedBox],
    embed_w: tuple[Parameter, Parameter],
    embed_h: tuple[Parameter, Parameter],
    extent: float,
    log_size: bool = True,
    pos: Tensor | np.ndarray | None = None,
) -> Tensor:
    """Assemble the N x D token matrix for one scene.

    Size scalars are log-transformed by default before the linear
    embeddings (raw sizes span orders of magnitude). A precomputed
    positional encoding can be supplied; either way it is
    gradient-stopped before the addition.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    if logits.shape[0] != n or len(boxes) != n:
        raise ValueError(
            f"inconsistent inputs: {n} features, {logits.shape[0]} logit rows, {len(boxes)} boxes"
        )
    ws = np.array([[b.w] for b in boxes])
    hs = np.array([[b.h] for b in boxes])
    if log_size:
        ws = np.log(ws)
        hs = np.log(hs)
    w_emb = linear_apply(Tensor(ws), *embed_w)
    h_emb = linear_apply(Tensor(hs), *embed_h)

    parts = [Tensor(features), logits, w_emb, h_emb]
    raw_dim = sum(p.shape[1] for p in parts)
    dim = raw_dim + (-raw_dim) % 4
    if dim != raw_dim:
        parts.append(Tensor(np.zeros((n, dim - raw_dim))))
    tokens = concat(parts, axis=1)

    if pos is None:
        pos_t = Tensor(pos_encoding_rows(boxes, dim, extent))
    else:
        pos_t = pos if isinstance(pos, Tensor) else Tensor(pos)
        if pos_t.shape != (n, dim):
            raise ValueError(f"pos shape {pos_t.shape} does not match tokens ({n}, {dim})")
    return tokens + stop_gradient(pos_t)
