"""Adaptive attention decay: distance falloff modulated per RoI by object
scale and local density, with an overlap mask.

The decay matrix entry for the pair (i, j) is

    A_ij = exp(-(eps_i * d_ij)^2 / sigma^2) * 1{IoU_ij < delta}

where eps_i = S / sqrt(w_i h_i) * exp(rho_bar_i) shrinks the attention
radius of small objects and of objects in dense neighborhoods. Everything
here is plain numpy: the matrix is a constant for the network (gradient
stopped by construction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import OrientedBox, pairwise_center_distance, pairwise_iou

# Below this spread the density normalization is degenerate and rho_bar
# is defined as zero.
_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class AdaptiveParams:
    """Hyperparameters: decay width sigma, overlap mask threshold delta,
    global scale factor S (scene units).

    The default S matches the instance-median sqrt-area of the default
    scene catalog, so S / sqrt(median area) is about 1 and the e^-1
    attention radius of a median object is about sigma scene units.
    """

    sigma: float = 4.0
    delta: float = 0.5
    global_scale: float = 5.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if self.global_scale <= 0:
            raise ValueError(f"global_scale must be positive, got {self.global_scale}")


@dataclass(frozen=True)
class DecayMatrix:
    values: np.ndarray  # N x N in [0, 1]
    eps: np.ndarray  # per-RoI scale/density factor, > 0
    rho_bar: np.ndarray  # per-RoI normalized density, in (-1, 1)


def local_density(
    boxes: list[OrientedBox],
    global_scale: float,
    sigma: float,
    dist_matrix: np.ndarray | None = None,
    neighbor_sized: bool = True,
) -> np.ndarray:
    """Area-weighted Gaussian neighborhood mass around each RoI.

    rho_i = sum_j w_j h_j * exp(-(S/sqrt(w_j h_j) * d_ij)^2 / sigma^2),
    summing over all j including j = i (the self term contributes the
    own area since d_ii = 0). With neighbor_sized=False the alternate
    reading is used: the summand carries w_i h_i instead of w_j h_j.
    """
    areas = np.array([b.area for b in boxes])
    d = pairwise_center_distance(boxes) if dist_matrix is None else dist_matrix
    if neighbor_sized:
        a = areas[None, :]  # [i, j] -> area_j
    else:
        a = areas[:, None]  # [i, j] -> area_i
    z = (global_scale / np.sqrt(a)) * d
    return (a * np.exp(-(z**2) / sigma**2)).sum(axis=1)


def normalize_density(rho: np.ndarray) -> np.ndarray:
    """Image-wise standardization squashed into (-1, 1).

    rho_bar = tanh((rho - mean) / std) with the population std; when the
    spread is degenerate (all equal, or a single RoI) rho_bar is zero.
    """
    rho = np.asarray(rho, dtype=np.float64)
    std = float(rho.std())
    if std < _STD_FLOOR:
        return np.zeros_like(rho)
    return np.tanh((rho - rho.mean()) / std)


def scale_factor(
    boxes: list[OrientedBox], rho_bar: np.ndarray, global_scale: float
) -> np.ndarray:
    """Per-RoI decay rate eps_i = S / sqrt(w_i h_i) * exp(rho_bar_i)."""
    scales = np.array([b.scale for b in boxes])
    return global_scale / scales * np.exp(rho_bar)


def decay_matrix(
    boxes: list[OrientedBox],
    eps: np.ndarray,
    params: AdaptiveParams,
    rho_bar: np.ndarray | None = None,
    iou_matrix: np.ndarray | None = None,
    dist_matrix: np.ndarray | None = None,
) -> DecayMatrix:
    """Distance decay with overlap masking.

    Row i decays with its own eps_i (the matrix is intentionally
    asymmetric); pairs at IoU >= delta are zeroed, which includes the
    diagonal since IoU_ii = 1.
    """
    d = pairwise_center_distance(boxes) if dist_matrix is None else dist_matrix
    iou = pairwise_iou(boxes) if iou_matrix is None else iou_matrix
    decay = np.exp(-((eps[:, None] * d) ** 2) / params.sigma**2)
    values = decay * (iou < params.delta)
    if rho_bar is None:
        rho_bar = np.zeros(len(boxes))
    return DecayMatrix(values=values, eps=np.asarray(eps), rho_bar=np.asarray(rho_bar))


def adaptive_decay(
    boxes: list[OrientedBox],
    params: AdaptiveParams,
    iou_matrix: np.ndarray | None = None,
    dist_matrix: np.ndarray | None = None,
    freeze_density: bool = False,
    fixed_eps: bool = False,
    neighbor_sized_density: bool = True,
) -> DecayMatrix:
    """Full pipeline rho -> rho_bar -> eps -> A, with ablation switches.

    freeze_density forces rho_bar = 0; fixed_eps forces eps = sqrt(S)
    for every RoI (removing scale adaptivity).
    """
    d = pairwise_center_distance(boxes) if dist_matrix is None else dist_matrix
    if freeze_density:
        rho_bar = np.zeros(len(boxes))
    else:
        rho = local_density(
            boxes,
            params.global_scale,
            params.sigma,
            dist_matrix=d,
            neighbor_sized=neighbor_sized_density,
        )
        rho_bar = normalize_density(rho)
    if fixed_eps:
        eps = np.full(len(boxes), np.sqrt(params.global_scale))
    else:
        eps = scale_factor(boxes, rho_bar, params.global_scale)
    return decay_matrix(
        boxes, eps, params, rho_bar=rho_bar, iou_matrix=iou_matrix, dist_matrix=d
    )
