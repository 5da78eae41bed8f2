"""Evidential statistics over detection sets: scale-outlier counting,
between-category chamfer distances, contextual conflict rate, and
average precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import OrientedBox, chamfer_distance, rotated_iou
from .heads import Detection
from .scenes import CLASS_NAMES, SceneLayout

# Detections deviating from their class's mean scale by more than this
# many standard deviations count as outliers.
_OUTLIER_SIGMAS = 3.0


@dataclass(frozen=True)
class ClassOutlierStats:
    mean: float | None
    std: float | None
    outliers: int
    total: int
    flagged: bool  # fewer than 2 qualifying detections: std undefined


@dataclass(frozen=True)
class OutlierReport:
    confidence_min: float
    per_class: dict[str, ClassOutlierStats]

    @property
    def total_outliers(self) -> int:
        return sum(s.outliers for s in self.per_class.values())


def scale_outliers(
    detections: list[Detection],
    confidence_min: float = 0.9,
    class_names: tuple[str, ...] = CLASS_NAMES,
) -> OutlierReport:
    """Per class, over detections with score > confidence_min: mean and
    population std of sqrt(w*h), and the count beyond three sigmas."""
    per_class: dict[str, ClassOutlierStats] = {}
    for ci, name in enumerate(class_names):
        scales = np.array(
            [d.box.scale for d in detections if d.label == ci and d.score > confidence_min]
        )
        if scales.size < 2:
            per_class[name] = ClassOutlierStats(
                mean=float(scales.mean()) if scales.size else None,
                std=None,
                outliers=0,
                total=int(scales.size),
                flagged=True,
            )
            continue
        mu = float(scales.mean())
        sd = float(scales.std())
        outliers = int(np.count_nonzero(np.abs(scales - mu) > _OUTLIER_SIGMAS * sd))
        per_class[name] = ClassOutlierStats(
            mean=mu, std=sd, outliers=outliers, total=int(scales.size), flagged=False
        )
    return OutlierReport(confidence_min=confidence_min, per_class=per_class)


@dataclass(frozen=True)
class ChamferResult:
    class_a: str
    class_b: str
    per_scene: list[float]
    mean: float | None
    qualifying_scenes: int
    skipped_scenes: int


def category_chamfer(
    scene_detections: list[list[Detection]],
    class_a: str,
    class_b: str,
    class_names: tuple[str, ...] = CLASS_NAMES,
) -> ChamferResult:
    """Chamfer distance between the two classes' detection centers,
    per scene, averaged over scenes where both classes appear."""
    ia = class_names.index(class_a)
    ib = class_names.index(class_b)
    values: list[float] = []
    skipped = 0
    for dets in scene_detections:
        pa = [(d.box.x, d.box.y) for d in dets if d.label == ia]
        pb = [(d.box.x, d.box.y) for d in dets if d.label == ib]
        if not pa or not pb:
            skipped += 1
            continue
        values.append(chamfer_distance(pa, pb))
    mean = float(np.mean(values)) if values else None
    return ChamferResult(
        class_a=class_a,
        class_b=class_b,
        per_scene=values,
        mean=mean,
        qualifying_scenes=len(values),
        skipped_scenes=skipped,
    )


@dataclass(frozen=True)
class ConflictReport:
    confidence_min: float
    confident: int
    violations: int

    @property
    def rate(self) -> float:
        return self.violations / self.confident if self.confident else 0.0


def conflict_rate(
    scene_detections: list[list[Detection]],
    layouts: list[SceneLayout],
    confidence_min: float = 0.5,
    class_names: tuple[str, ...] = CLASS_NAMES,
) -> ConflictReport:
    """Fraction of confident detections whose label violates a generator
    placement rule (e.g. a ship far from every harbor anchor)."""
    confident = 0
    violations = 0
    for dets, layout in zip(scene_detections, layouts):
        for d in dets:
            if d.score < confidence_min:
                continue
            confident += 1
            name = class_names[d.label]
            radius = layout.rule_radius.get(name)
            if radius is None:
                continue
            anchors = layout.anchors_for(name)
            if not anchors:
                violations += 1
                continue
            dist = min(
                np.hypot(d.box.x - ax, d.box.y - ay) for ax, ay in anchors
            )
            if dist > radius:
                violations += 1
    return ConflictReport(
        confidence_min=confidence_min, confident=confident, violations=violations
    )


@dataclass(frozen=True)
class APReport:
    iou_threshold: float
    interpolation: str
    per_class: dict[str, float | None] = field(default_factory=dict)

    @property
    def mean(self) -> float | None:
        vals = [v for v in self.per_class.values() if v is not None]
        return float(np.mean(vals)) if vals else None


def _ap_all_points(recall: np.ndarray, precision: np.ndarray) -> float:
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    return float(np.sum((mrec[idx] - mrec[idx - 1]) * mpre[idx]))


def _ap_voc2007(recall: np.ndarray, precision: np.ndarray) -> float:
    ap = 0.0
    for t in np.linspace(0.0, 1.0, 11):
        mask = recall >= t
        ap += float(precision[mask].max()) if mask.any() else 0.0
    return ap / 11.0


def average_precision(
    scene_detections: list[list[Detection]],
    scene_gt: list[tuple[list[OrientedBox], np.ndarray]],
    iou_threshold: float = 0.5,
    interpolation: str = "all_points",
    class_names: tuple[str, ...] = CLASS_NAMES,
) -> APReport:
    """Greedy score-descending matching against unmatched same-class
    ground truth at the IoU threshold; precision-recall integrated with
    all-points interpolation (or the VOC2007 11-point variant).

    Classes absent from the ground truth get AP None and are excluded
    from the mean.
    """
    if interpolation not in ("all_points", "voc2007"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    report: dict[str, float | None] = {}
    for ci, name in enumerate(class_names):
        npos = sum(int((classes == ci).sum()) for _, classes in scene_gt)
        if npos == 0:
            report[name] = None
            continue
        dets: list[tuple[float, int, Detection]] = []
        for si, scene_dets in enumerate(scene_detections):
            dets.extend((d.score, si, d) for d in scene_dets if d.label == ci)
        if not dets:
            report[name] = 0.0
            continue
        order = np.argsort(-np.array([s for s, _, _ in dets]), kind="stable")
        matched = {
            si: np.zeros(len(boxes), dtype=bool)
            for si, (boxes, _) in enumerate(scene_gt)
        }
        tp = np.zeros(order.size)
        fp = np.zeros(order.size)
        for rank, di in enumerate(order):
            _, si, det = dets[di]
            boxes, classes = scene_gt[si]
            best_iou = 0.0
            best_gt = -1
            for gi, (box, cls) in enumerate(zip(boxes, classes)):
                if cls != ci or matched[si][gi]:
                    continue
                iou = rotated_iou(det.box, box)
                if iou > best_iou:
                    best_iou = iou
                    best_gt = gi
            if best_gt >= 0 and best_iou >= iou_threshold:
                matched[si][best_gt] = True
                tp[rank] = 1.0
            else:
                fp[rank] = 1.0
        cum_tp = np.cumsum(tp)
        cum_fp = np.cumsum(fp)
        recall = cum_tp / npos
        precision = cum_tp / np.maximum(cum_tp + cum_fp, 1e-12)
        if interpolation == "all_points":
            report[name] = _ap_all_points(recall, precision)
        else:
            report[name] = _ap_voc2007(recall, precision)
    return APReport(
        iou_threshold=iou_threshold, interpolation=interpolation, per_class=report
    )
