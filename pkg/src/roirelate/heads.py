"""Detection heads: classification + oriented-box regression, target
assignment and the two-phase (preliminary + final) loss.

Both heads share the same architecture (one hidden layer, two output
projections) with separate parameters. Output projections start at zero
so an untrained head predicts uniform class logits and identity box
refinements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import OrientedBox, cross_iou, wrap_half_pi
from .nn.autodiff import Parameter, Tensor, log_softmax
from .nn.layers import linear_apply


@dataclass(frozen=True)
class Detection:
    """One scored, labeled oriented box (label indexes foreground classes)."""

    box: OrientedBox
    label: int
    score: float

    def __post_init__(self):
        if not 0.0 < self.score <= 1.0:
            raise ValueError(f"score must be in (0, 1], got {self.score}")


@dataclass
class HeadParams:
    w1: Parameter
    b1: Parameter
    cls_w: Parameter
    cls_b: Parameter
    reg_w: Parameter
    reg_b: Parameter

    def named(self, prefix: str) -> dict[str, Parameter]:
        return {f"{prefix}.{k}": v for k, v in vars(self).items()}


def init_head_params(
    in_dim: int, hidden: int, num_classes: int, rng: np.random.Generator, prefix: str
) -> HeadParams:
    """num_classes counts foreground classes; background gets the last logit."""
    w1 = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, hidden))
    return HeadParams(
        w1=Parameter(w1, name=f"{prefix}.w1"),
        b1=Parameter(np.zeros(hidden), name=f"{prefix}.b1"),
        cls_w=Parameter(np.zeros((hidden, num_classes + 1)), name=f"{prefix}.cls_w"),
        cls_b=Parameter(np.zeros(num_classes + 1), name=f"{prefix}.cls_b"),
        reg_w=Parameter(np.zeros((hidden, 5)), name=f"{prefix}.reg_w"),
        reg_b=Parameter(np.zeros(5), name=f"{prefix}.reg_b"),
    )


def head_forward(features: Tensor, params: HeadParams) -> tuple[Tensor, Tensor]:
    """(logits N x (C+1), deltas N x 5) from a shared hidden layer."""
    x = features if isinstance(features, Tensor) else Tensor(features)
    hidden = linear_apply(x, params.w1, params.b1).gelu()
    logits = linear_apply(hidden, params.cls_w, params.cls_b)
    deltas = linear_apply(hidden, params.reg_w, params.reg_b)
    return logits, deltas


# -- box delta parameterization ------------------------------------------


def encode_box(gt: OrientedBox, proposal: OrientedBox) -> np.ndarray:
    """(tx, ty, tw, th, ta): center offsets relative to proposal size,
    log size ratios, wrapped angle difference."""
    return np.array(
        [
            (gt.x - proposal.x) / proposal.w,
            (gt.y - proposal.y) / proposal.h,
            np.log(gt.w / proposal.w),
            np.log(gt.h / proposal.h),
            wrap_half_pi(gt.alpha - proposal.alpha),
        ]
    )


def decode_box(proposal: OrientedBox, delta) -> OrientedBox:
    """Inverse of encode_box."""
    tx, ty, tw, th, ta = (float(v) for v in delta)
    return OrientedBox(
        x=proposal.x + tx * proposal.w,
        y=proposal.y + ty * proposal.h,
        w=proposal.w * np.exp(tw),
        h=proposal.h * np.exp(th),
        alpha=wrap_half_pi(proposal.alpha + ta),
    )


def decode_boxes(proposals: list[OrientedBox], deltas: np.ndarray) -> list[OrientedBox]:
    return [decode_box(p, d) for p, d in zip(proposals, deltas)]


def encode_boxes(gts: list[OrientedBox], proposals: list[OrientedBox]) -> np.ndarray:
    return np.stack([encode_box(g, p) for g, p in zip(gts, proposals)])


# -- target assignment -----------------------------------------------------


@dataclass(frozen=True)
class Assignment:
    """Per-proposal targets: class index (background = num_classes) and the
    matched ground-truth index (-1 for background). Proposals whose best
    IoU falls between the thresholds are ignored by the class loss."""

    class_targets: np.ndarray  # (N,) int
    gt_index: np.ndarray  # (N,) int, -1 for background
    fg_mask: np.ndarray  # (N,) bool
    ignore_mask: np.ndarray  # (N,) bool
    background_class: int


def assign_targets(
    proposals: list[OrientedBox],
    gt_boxes: list[OrientedBox],
    gt_classes: np.ndarray,
    num_classes: int,
    fg_threshold: float = 0.5,
    bg_threshold: float = 0.5,
    iou: np.ndarray | None = None,
) -> Assignment:
    """Max-IoU assignment: foreground at IoU >= fg_threshold, background
    below bg_threshold; ties go to the lowest ground-truth index."""
    if not 0.0 <= bg_threshold <= fg_threshold <= 1.0:
        raise ValueError(
            f"need 0 <= bg_threshold <= fg_threshold <= 1, got {bg_threshold}, {fg_threshold}"
        )
    n = len(proposals)
    class_targets = np.full(n, num_classes, dtype=np.int64)
    gt_index = np.full(n, -1, dtype=np.int64)
    ignore = np.zeros(n, dtype=bool)
    if gt_boxes:
        if iou is None:
            iou = cross_iou(proposals, gt_boxes)
        best = iou.argmax(axis=1)  # argmax takes the lowest index on ties
        best_iou = iou[np.arange(n), best]
        fg = best_iou >= fg_threshold
        ignore = (~fg) & (best_iou >= bg_threshold)
        class_targets[fg] = np.asarray(gt_classes)[best[fg]]
        gt_index[fg] = best[fg]
    fg_mask = gt_index >= 0
    return Assignment(
        class_targets=class_targets,
        gt_index=gt_index,
        fg_mask=fg_mask,
        ignore_mask=ignore,
        background_class=num_classes,
    )


# -- two-phase loss ----------------------------------------------------


@dataclass(frozen=True)
class LossWeights:
    prelim_cls: float = 1.0
    prelim_reg: float = 1.0
    final_cls: float = 1.0
    final_reg: float = 1.0


def cross_entropy(
    logits: Tensor, class_targets: np.ndarray, ignore_mask: np.ndarray | None = None
) -> Tensor:
    """Mean softmax cross-entropy over non-ignored rows."""
    n, c = logits.shape
    onehot = np.zeros((n, c))
    onehot[np.arange(n), class_targets] = 1.0
    if ignore_mask is not None:
        onehot[ignore_mask] = 0.0
        n = max(1, n - int(ignore_mask.sum()))
    return -(log_softmax(logits) * onehot).sum() * (1.0 / n)


def smooth_l1_loss(deltas: Tensor, targets: np.ndarray, fg_mask: np.ndarray) -> Tensor:
    """Smooth-L1 over foreground rows, averaged per foreground box;
    contributes exactly zero when there is no foreground."""
    idx = np.flatnonzero(fg_mask)
    if idx.size == 0:
        return Tensor(np.zeros(()))
    diff = deltas[idx] - Tensor(targets)
    return diff.smooth_l1().sum() * (1.0 / idx.size)


def detection_loss(
    prelim_logits: Tensor,
    prelim_deltas: Tensor,
    final_logits: Tensor | None,
    final_deltas: Tensor | None,
    assignment: Assignment,
    prelim_reg_targets: np.ndarray,
    final_reg_targets: np.ndarray | None,
    weights: LossWeights = LossWeights(),
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of both phases' classification and regression terms.

    Regression targets are given for foreground rows only (in fg order).
    The final-phase terms are skipped when the final head is absent
    (transformer disabled).
    """
    terms: dict[str, float] = {}
    total = Tensor(np.zeros(()))

    ce_prelim = cross_entropy(
        prelim_logits, assignment.class_targets, assignment.ignore_mask
    )
    reg_prelim = smooth_l1_loss(prelim_deltas, prelim_reg_targets, assignment.fg_mask)
    terms["prelim_cls"] = ce_prelim.item()
    terms["prelim_reg"] = reg_prelim.item()
    total = total + weights.prelim_cls * ce_prelim + weights.prelim_reg * reg_prelim

    if final_logits is not None:
        ce_final = cross_entropy(
            final_logits, assignment.class_targets, assignment.ignore_mask
        )
        reg_final = smooth_l1_loss(final_deltas, final_reg_targets, assignment.fg_mask)
        terms["final_cls"] = ce_final.item()
        terms["final_reg"] = reg_final.item()
        total = total + weights.final_cls * ce_final + weights.final_reg * reg_final

    terms["total"] = total.item()
    return total, terms


def detections_from_outputs(
    logits: np.ndarray,
    boxes: list[OrientedBox],
    num_classes: int,
) -> list[Detection]:
    """Greedy per-proposal detections: softmax over C+1 classes, emit
    proposals whose argmax is a foreground class."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    out = []
    for i, box in enumerate(boxes):
        label = int(probs[i].argmax())
        if label >= num_classes:
            continue
        out.append(Detection(box=box, label=label, score=float(probs[i, label])))
    return out
