"""Experiment orchestration: training loop, evaluation, ablation grids.

One optimizer step per scene. Scenes are regenerated from seed ranges
derived off the master seed (train and eval ranges are disjoint by
label), so a config + seed fully determines every artifact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    APReport,
    ChamferResult,
    ConflictReport,
    OutlierReport,
    average_precision,
    category_chamfer,
    conflict_rate,
    scale_outliers,
)
from .config import ExperimentConfig, apply_overrides, config_hash
from .geometry import cross_iou
from .heads import (
    Assignment,
    Detection,
    LossWeights,
    assign_targets,
    detection_loss,
    detections_from_outputs,
    encode_boxes,
)
from .model import ForwardResult, RelationRefiner
from .nn.autodiff import no_grad
from .nn.optim import AdamW
from .nn.rng import RNG_ALGORITHM, derive_seed, labeled_rng
from .scenes import CLASS_NAMES, Scene, generate_scene


class DivergenceError(RuntimeError):
    """Training loss became non-finite; diagnostics attached."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class SceneTargets:
    assignment: Assignment
    prelim_reg_targets: np.ndarray  # (n_fg, 5), proposal -> gt
    fg_indices: np.ndarray
    fg_gt_boxes: list


def prepare_targets(scene: Scene, config: ExperimentConfig) -> SceneTargets:
    iou = cross_iou(scene.proposals, scene.gt_boxes)
    assignment = assign_targets(
        scene.proposals,
        scene.gt_boxes,
        scene.gt_classes,
        num_classes=len(CLASS_NAMES),
        fg_threshold=config.assign.fg_threshold,
        bg_threshold=config.assign.bg_threshold,
        iou=iou,
    )
    fg_idx = np.flatnonzero(assignment.fg_mask)
    fg_gt = [scene.gt_boxes[assignment.gt_index[i]] for i in fg_idx]
    if fg_idx.size:
        prelim_targets = encode_boxes(fg_gt, [scene.proposals[i] for i in fg_idx])
    else:
        prelim_targets = np.zeros((0, 5))
    return SceneTargets(
        assignment=assignment,
        prelim_reg_targets=prelim_targets,
        fg_indices=fg_idx,
        fg_gt_boxes=fg_gt,
    )


def effective_loss_weights(config: ExperimentConfig) -> LossWeights:
    w = config.loss
    if not config.ablation.use_prelim_supervision:
        return LossWeights(0.0, 0.0, w.final_cls, w.final_reg)
    return w


def scene_loss(
    model: RelationRefiner,
    scene: Scene,
    targets: SceneTargets,
    weights: LossWeights,
    training: bool,
    rng,
):
    """Forward + two-phase loss for one scene."""
    res = model.forward(scene, training=training, rng=rng)
    final_reg = None
    if res.final_deltas is not None and targets.fg_indices.size:
        final_reg = encode_boxes(
            targets.fg_gt_boxes, [res.prelim_boxes[i] for i in targets.fg_indices]
        )
    elif res.final_deltas is not None:
        final_reg = np.zeros((0, 5))
    loss, terms = detection_loss(
        res.prelim_logits,
        res.prelim_deltas,
        res.final_logits,
        res.final_deltas,
        targets.assignment,
        targets.prelim_reg_targets,
        final_reg,
        weights,
    )
    return loss, terms, res


# -- evaluation -----------------------------------------------------------


@dataclass
class EvalMetrics:
    fg_accuracy: float
    fg_count: int
    mean_ap: float | None
    per_class_ap: dict[str, float | None]
    conflict: ConflictReport
    outliers: OutlierReport
    chamfer: dict[str, ChamferResult]
    n_scenes: int

    def to_jsonable(self) -> dict:
        return {
            "fg_accuracy": self.fg_accuracy,
            "fg_count": self.fg_count,
            "mean_ap": self.mean_ap,
            "per_class_ap": self.per_class_ap,
            "conflict_rate": self.conflict.rate,
            "conflict_violations": self.conflict.violations,
            "conflict_confident": self.conflict.confident,
            "outlier_total": self.outliers.total_outliers,
            "outliers_per_class": {
                name: stats.outliers for name, stats in self.outliers.per_class.items()
            },
            "chamfer": {
                key: {
                    "mean": res.mean,
                    "qualifying_scenes": res.qualifying_scenes,
                    "skipped_scenes": res.skipped_scenes,
                }
                for key, res in self.chamfer.items()
            },
            "n_scenes": self.n_scenes,
        }


@dataclass
class EvalOutput:
    metrics: EvalMetrics
    scene_detections: list[list[Detection]]
    ap_report: APReport


def evaluate(
    model: RelationRefiner, config: ExperimentConfig, scenes: list[Scene]
) -> EvalOutput:
    """Eval-mode forward over scenes; accuracy on assigned foreground
    proposals plus the analysis-module statistics."""
    if not scenes:
        raise ValueError("evaluate requires at least one scene")
    detections: list[list[Detection]] = []
    correct = 0
    fg_total = 0
    for scene in scenes:
        with no_grad():
            res: ForwardResult = model.forward(scene, training=False)
        targets = prepare_targets(scene, config)
        logits = res.output_logits.data
        preds = logits.argmax(axis=1)
        fg = targets.assignment.fg_mask
        correct += int((preds[fg] == targets.assignment.class_targets[fg]).sum())
        fg_total += int(fg.sum())
        detections.append(
            detections_from_outputs(logits, res.output_boxes(), len(CLASS_NAMES))
        )
    gt = [(s.gt_boxes, s.gt_classes) for s in scenes]
    ap = average_precision(
        detections,
        gt,
        iou_threshold=config.analysis.ap_iou_threshold,
        interpolation=config.analysis.ap_interpolation,
    )
    conflict = conflict_rate(
        detections,
        [s.layout for s in scenes],
        confidence_min=config.analysis.conflict_confidence,
    )
    pooled = [d for dets in detections for d in dets]
    outliers = scale_outliers(
        pooled, confidence_min=config.analysis.outlier_confidence
    )
    chamfer = {
        f"{a}__{b}": category_chamfer(detections, a, b)
        for a, b in config.analysis.chamfer_pairs
    }
    metrics = EvalMetrics(
        fg_accuracy=correct / fg_total if fg_total else 0.0,
        fg_count=fg_total,
        mean_ap=ap.mean,
        per_class_ap=ap.per_class,
        conflict=conflict,
        outliers=outliers,
        chamfer=chamfer,
        n_scenes=len(scenes),
    )
    return EvalOutput(metrics=metrics, scene_detections=detections, ap_report=ap)


def make_scenes(config: ExperimentConfig, split: str, count: int) -> list[Scene]:
    """Deterministic scene set; split labels keep seed ranges disjoint."""
    return [
        generate_scene(config.scene, derive_seed(config.seed, f"{split}-scene-{i}"))
        for i in range(count)
    ]


# -- training -------------------------------------------------------------


@dataclass
class RunResult:
    config_hash: str
    seed: int
    rng_algorithm: str
    n_parameters: int
    total_steps: int
    loss_curve: list[float]
    metrics: EvalMetrics
    wall_clock: float  # excluded from the deterministic payload

    def to_jsonable(self) -> dict:
        """Deterministic payload: identical config + seed gives identical
        bytes, so wall clock stays out."""
        return {
            "schema": "roirelate-result-v1",
            "config_hash": self.config_hash,
            "seed": self.seed,
            "rng_algorithm": self.rng_algorithm,
            "n_parameters": self.n_parameters,
            "total_steps": self.total_steps,
            "loss_curve": self.loss_curve,
            "metrics": self.metrics.to_jsonable(),
        }


@dataclass
class TrainOutput:
    result: RunResult
    model: RelationRefiner
    eval_output: EvalOutput


def train(config: ExperimentConfig) -> TrainOutput:
    """Full training run; deterministic given the config (incl. seed)."""
    t0 = time.perf_counter()
    model = RelationRefiner(config)
    params = model.parameters()
    opt = AdamW(
        params,
        lr=config.optim.lr,
        betas=(config.optim.beta1, config.optim.beta2),
        eps=config.optim.eps,
        weight_decay=config.optim.weight_decay,
    )
    scenes = make_scenes(config, "train", config.train_scenes)
    targets = [prepare_targets(s, config) for s in scenes]
    weights = effective_loss_weights(config)
    dropout_rng = labeled_rng(config.seed, "dropout")
    total_steps = config.epochs * len(scenes)
    loss_curve: list[float] = []
    step = 0
    for epoch in range(config.epochs):
        order = labeled_rng(config.seed, f"epoch-order-{epoch}").permutation(len(scenes))
        epoch_losses = []
        for si in order:
            opt.lr = config.optim.lr_at(step, total_steps)
            loss, terms, _ = scene_loss(
                model, scenes[si], targets[si], weights, True, dropout_rng
            )
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss at step {step}",
                    diagnostics={
                        "step": step,
                        "epoch": epoch,
                        "scene_seed": scenes[si].seed,
                        "lr": opt.lr,
                        "terms": terms,
                    },
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(value)
            step += 1
        if epoch_losses:
            loss_curve.append(float(np.mean(epoch_losses)))
    eval_scenes = make_scenes(config, "eval", config.eval_scenes)
    eval_out = evaluate(model, config, eval_scenes)
    result = RunResult(
        config_hash=config_hash(config),
        seed=config.seed,
        rng_algorithm=RNG_ALGORITHM,
        n_parameters=sum(p.size for p in params.values()),
        total_steps=total_steps,
        loss_curve=loss_curve,
        metrics=eval_out.metrics,
        wall_clock=time.perf_counter() - t0,
    )
    return TrainOutput(result=result, model=model, eval_output=eval_out)


# -- ablation grids -----------------------------------------------------


TABLE5_ARMS: list[tuple[str, dict]] = [
    (
        "baseline",
        {
            "ablation.use_transformer": False,
            "ablation.use_relations": False,
            "ablation.use_adaptive": False,
        },
    ),
    (
        "transformer",
        {"ablation.use_relations": False, "ablation.use_adaptive": False},
    ),
    ("transformer+relations", {"ablation.use_adaptive": False}),
    ("transformer+adaptive", {"ablation.use_relations": False}),
    ("full", {}),
]

TABLE4_ARMS: list[tuple[str, dict]] = [
    ("full", {}),
    ("no_prelim_supervision", {"ablation.use_prelim_supervision": False}),
]

TABLE6B_ARMS: list[tuple[str, dict]] = [
    ("full", {}),
    ("no_scale", {"ablation.fixed_eps": True}),
    ("no_overlap", {"adaptive.delta": 1.0}),
    ("no_density", {"ablation.freeze_density": True}),
]

ARM_PRESETS = {
    "table5": TABLE5_ARMS,
    "table4": TABLE4_ARMS,
    "table6b": TABLE6B_ARMS,
}


@dataclass
class GridResult:
    base_hash: str
    seeds: list[int]
    arms: list[str]
    arm_overrides: dict[str, dict]
    per_seed_metrics: dict[str, list[dict]] = field(default_factory=dict)

    def metric_values(self, arm: str, key: str) -> np.ndarray:
        return np.array([m[key] for m in self.per_seed_metrics[arm]])

    def to_jsonable(self) -> dict:
        summary = {}
        for arm in self.arms:
            acc = self.metric_values(arm, "fg_accuracy")
            summary[arm] = {
                "fg_accuracy_mean": float(acc.mean()),
                "fg_accuracy_std": float(acc.std()),
            }
        return {
            "schema": "roirelate-ablation-v1",
            "base_config_hash": self.base_hash,
            "seeds": self.seeds,
            "arms": self.arms,
            "overrides": self.arm_overrides,
            "per_seed_metrics": self.per_seed_metrics,
            "summary": summary,
        }

    def format_table(self) -> str:
        lines = [f"{'arm':28s} {'accuracy':>16s} {'mAP':>8s} {'conflict':>9s} {'outliers':>9s}"]
        for arm in self.arms:
            rows = self.per_seed_metrics[arm]
            acc = np.array([m["fg_accuracy"] for m in rows])
            ap = np.array([m["mean_ap"] for m in rows if m["mean_ap"] is not None])
            conf = np.array([m["conflict_rate"] for m in rows])
            outl = np.array([m["outlier_total"] for m in rows])
            lines.append(
                f"{arm:28s} {acc.mean():8.4f}±{acc.std():6.4f}"
                f" {ap.mean() if ap.size else float('nan'):8.4f}"
                f" {conf.mean():9.4f} {outl.mean():9.2f}"
            )
        return "\n".join(lines)


def run_ablation_grid(
    base: ExperimentConfig,
    arms: list[tuple[str, dict]],
    seeds: list[int],
) -> GridResult:
    """Train/evaluate every arm under matched seeds."""
    result = GridResult(
        base_hash=config_hash(base),
        seeds=list(seeds),
        arms=[name for name, _ in arms],
        arm_overrides={name: dict(ov) for name, ov in arms},
    )
    for name, overrides in arms:
        rows = []
        for seed in seeds:
            cfg = apply_overrides(base, dict(overrides))
            cfg = apply_overrides(cfg, {"seed": int(seed)})
            out = train(cfg)
            rows.append(out.result.metrics.to_jsonable())
        result.per_seed_metrics[name] = rows
    return result
