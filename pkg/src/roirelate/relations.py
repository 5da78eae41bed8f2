"""Pairwise spatial/geometric relations and their aggregation into an
additive attention bias.

Six relation channels are computed between every pair of boxes, in fixed
order (dx, dy, dist, dalpha, iou, area). Pixel-valued channels are
normalized by the image extent so the downstream linear layer sees
O(1) inputs regardless of scene scale; the area ratio is stored as a log
by default, which makes its antisymmetry exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import OrientedBox, pairwise_iou, wrap_half_pi_array
from .nn.autodiff import Parameter, Tensor, stop_gradient
from .nn.layers import linear_apply

CHANNELS = ("dx", "dy", "dist", "dalpha", "iou", "area")


@dataclass(frozen=True)
class RelationTensor:
    """N x N x 6 pairwise relation values plus normalization metadata."""

    values: np.ndarray
    extent: float
    log_area: bool

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, :, CHANNELS.index(name)]


@dataclass(frozen=True)
class AttentionBias:
    """N x N additive bias P inside the attention softmax."""

    values: Tensor

    @property
    def n(self) -> int:
        return self.values.shape[0]


def pairwise_relations(
    boxes: list[OrientedBox],
    image_extent: float,
    log_area: bool = True,
    iou_matrix: np.ndarray | None = None,
) -> RelationTensor:
    """All six relation channels for every ordered box pair.

    Channel conventions, for entry [i, j]:
      dx, dy  -- (x_j - x_i)/extent, (y_j - y_i)/extent (antisymmetric)
      dist    -- Euclidean center distance / extent
      dalpha  -- alpha_j - alpha_i wrapped to (-pi/2, pi/2]
      iou     -- rotated IoU (symmetric, unit diagonal)
      area    -- log((w_i*h_i)/(w_j*h_j)), or the raw ratio if log_area
                 is disabled
    A precomputed IoU matrix may be supplied to avoid recomputation.
    """
    if image_extent <= 0:
        raise ValueError(f"image_extent must be positive, got {image_extent}")
    n = len(boxes)
    if n < 1:
        raise ValueError("pairwise_relations requires at least one box")
    xs = np.array([b.x for b in boxes])
    ys = np.array([b.y for b in boxes])
    alphas = np.array([b.alpha for b in boxes])
    areas = np.array([b.area for b in boxes])

    dx = (xs[None, :] - xs[:, None]) / image_extent
    dy = (ys[None, :] - ys[:, None]) / image_extent
    dist = np.hypot(dx, dy)
    dalpha = wrap_half_pi_array(alphas[None, :] - alphas[:, None])
    iou = pairwise_iou(boxes) if iou_matrix is None else iou_matrix
    ratio = areas[:, None] / areas[None, :]
    area = np.log(ratio) if log_area else ratio

    values = np.stack([dx, dy, dist, dalpha, iou, area], axis=2)
    return RelationTensor(values=values, extent=image_extent, log_area=log_area)


def aggregate_bias(
    relations: RelationTensor | Tensor | np.ndarray,
    weight: Parameter,
    bias: Parameter,
) -> AttentionBias:
    """Affine 6 -> 1 combination of the relation channels per pair.

    The projection is trainable; the relation values themselves are
    passed through a stop-gradient so no gradient ever reaches box
    coordinates.
    """
    if isinstance(relations, RelationTensor):
        raw = Tensor(relations.values)
    elif isinstance(relations, Tensor):
        raw = relations
    else:
        raw = Tensor(np.asarray(relations))
    if weight.shape != (len(CHANNELS), 1) or bias.shape != (1,):
        raise ValueError(
            f"relation projection must map 6 -> 1, got weight {weight.shape}, bias {bias.shape}"
        )
    n = raw.shape[0]
    flat = stop_gradient(raw).reshape(n * n, len(CHANNELS))
    projected = linear_apply(flat, weight, bias)
    return AttentionBias(values=projected.reshape(n, n))
