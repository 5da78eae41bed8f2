"""Whole-pipeline gradient verification at tiny dimensions.

Builds a 4-proposal instance through the full token -> encoder -> head
path and finite-difference-checks every trainable parameter group. The
box-derived quantities the model treats as constants (decay matrix,
relation values, positional encodings) enter here as probe Parameters
routed through the same stop-gradient calls the real pipeline uses, so
the report can assert they receive exactly zero gradient.

Boxes are decoded once and frozen for the check: the stopped pathways
must not move under parameter perturbation, otherwise central
differences would see derivatives the model deliberately discards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptive import adaptive_decay
from .config import ExperimentConfig, from_dict
from .encoder import encoder_forward
from .geometry import OrientedBox, pairwise_center_distance, pairwise_iou
from .heads import (
    assign_targets,
    decode_boxes,
    detection_loss,
    encode_boxes,
    head_forward,
)
from .model import RelationRefiner
from .nn.autodiff import Parameter, Tensor, no_grad
from .nn.gradcheck import GradCheckReport, finite_diff_check
from .nn.layers import linear_apply
from .nn.rng import labeled_rng
from .relations import pairwise_relations
from .scenes import CLASS_NAMES
from .tokens import build_tokens, pos_encoding_rows


def tiny_config(seed: int = 0) -> ExperimentConfig:
    """Smallest faithful configuration: N <= 4 proposals, model dim 16."""
    return from_dict(
        ExperimentConfig,
        {
            "seed": seed,
            "scene": {"feature_dim": 2},
            "model": {
                "size_embed_dim": 1,
                "head_hidden": 3,
                "encoder_layers": 2,
                "heads": 4,
                "ff_mult": 1,
                "dropout": 0.0,
            },
        },
    )


@dataclass
class GradCheckSetup:
    params: dict[str, Parameter]
    stop_grad_groups: set[str]
    loss_fn: object


def build_gradcheck_setup(seed: int = 0, inject_bug: bool = False) -> GradCheckSetup:
    config = tiny_config(seed)
    model = RelationRefiner(config)
    rng = labeled_rng(seed, "gradcheck")

    # Nudge every parameter off its (often zero) init so no gradient is
    # degenerate at the check point.
    params = model.parameters()
    for p in params.values():
        p.data += 0.05 * rng.normal(size=p.data.shape)

    proposals = [
        OrientedBox(10.0, 10.0, 4.0, 2.0, 0.2),
        OrientedBox(16.0, 11.0, 3.0, 2.5, -0.4),
        OrientedBox(11.0, 18.0, 5.0, 3.0, 0.9),
        OrientedBox(24.0, 24.0, 2.0, 2.0, 0.0),
    ]
    gt_boxes = [
        OrientedBox(10.5, 10.2, 4.2, 2.1, 0.25),
        OrientedBox(16.2, 10.8, 3.1, 2.4, -0.35),
        OrientedBox(11.0, 17.5, 4.8, 3.2, 0.85),
    ]
    gt_classes = np.array([0, 1, 3])
    extent = 32.0
    features = rng.normal(size=(len(proposals), config.scene.feature_dim))

    assignment = assign_targets(
        proposals, gt_boxes, gt_classes, num_classes=len(CLASS_NAMES)
    )
    fg_idx = np.flatnonzero(assignment.fg_mask)
    fg_gt = [gt_boxes[assignment.gt_index[i]] for i in fg_idx]
    prelim_reg_targets = encode_boxes(fg_gt, [proposals[i] for i in fg_idx])

    # Freeze the box-derived pipeline inputs at their initial values.
    with no_grad():
        _, init_deltas = head_forward(Tensor(features), model.prelim_head)
    frozen_boxes = decode_boxes(proposals, init_deltas.data)
    final_reg_targets = encode_boxes(fg_gt, [frozen_boxes[i] for i in fg_idx])
    iou = pairwise_iou(frozen_boxes)
    dist = pairwise_center_distance(frozen_boxes)
    relations = pairwise_relations(frozen_boxes, extent, iou_matrix=iou)
    decay = adaptive_decay(
        frozen_boxes, config.adaptive, iou_matrix=iou, dist_matrix=dist
    )

    n = len(proposals)
    dim = model.model_dim
    rel_probe = Parameter(relations.values, name="probe.relations")
    decay_probe = Parameter(decay.values, name="probe.decay")
    pos_probe = Parameter(pos_encoding_rows(frozen_boxes, dim, extent), name="probe.pos")

    bug_target = params["prelim_head.w1"] if inject_bug else None

    def loss_fn() -> Tensor:
        if bug_target is not None:
            # Deliberately corrupted backward: doubles this weight's
            # gradient while leaving the forward value untouched.
            w1 = Tensor._node(
                bug_target.data.copy(), ((bug_target, lambda g: 2.0 * g),)
            )
            hidden = (Tensor(features) @ w1 + model.prelim_head.b1).gelu()
            prelim_logits = linear_apply(hidden, model.prelim_head.cls_w, model.prelim_head.cls_b)
            prelim_deltas = linear_apply(hidden, model.prelim_head.reg_w, model.prelim_head.reg_b)
        else:
            prelim_logits, prelim_deltas = head_forward(
                Tensor(features), model.prelim_head
            )
        tokens = build_tokens(
            features,
            prelim_logits,
            frozen_boxes,
            model.embed_w,
            model.embed_h,
            extent,
            pos=pos_probe,
        )
        x = encoder_forward(
            tokens,
            rel_probe,
            decay_probe,
            model.encoder_config,
            model.encoder_layers,
            rng=None,
            training=False,
        )
        final_logits, final_deltas = head_forward(x, model.final_head)
        loss, _ = detection_loss(
            prelim_logits,
            prelim_deltas,
            final_logits,
            final_deltas,
            assignment,
            prelim_reg_targets,
            final_reg_targets,
        )
        return loss

    all_params = dict(params)
    probes = {"probe.relations": rel_probe, "probe.decay": decay_probe, "probe.pos": pos_probe}
    all_params.update(probes)
    return GradCheckSetup(
        params=all_params, stop_grad_groups=set(probes), loss_fn=loss_fn
    )


def run_gradcheck(
    seed: int = 0,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    inject_bug: bool = False,
) -> GradCheckReport:
    setup = build_gradcheck_setup(seed, inject_bug=inject_bug)
    return finite_diff_check(
        setup.loss_fn,
        setup.params,
        h=h,
        tolerance=tolerance,
        expect_zero=setup.stop_grad_groups,
    )
