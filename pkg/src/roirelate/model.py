"""End-to-end model: preliminary head -> RoI tokens -> relation encoder ->
final head, with every box-derived attention input gradient-stopped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptive import adaptive_decay
from .config import ExperimentConfig
from .encoder import EncoderConfig, encoder_forward, init_encoder_params
from .geometry import OrientedBox, pairwise_center_distance, pairwise_iou
from .heads import HeadParams, decode_boxes, head_forward, init_head_params
from .nn.autodiff import Parameter, Tensor
from .nn.rng import labeled_rng
from .relations import pairwise_relations
from .scenes import CLASS_NAMES, Scene
from .tokens import build_tokens, token_dim


@dataclass
class ForwardResult:
    prelim_logits: Tensor
    prelim_deltas: Tensor
    prelim_boxes: list[OrientedBox]
    final_logits: Tensor | None
    final_deltas: Tensor | None

    @property
    def output_logits(self) -> Tensor:
        """Logits of the last detection phase that exists."""
        return self.final_logits if self.final_logits is not None else self.prelim_logits

    def output_boxes(self) -> list[OrientedBox]:
        if self.final_deltas is None:
            return self.prelim_boxes
        return decode_boxes(self.prelim_boxes, self.final_deltas.data)


class RelationRefiner:
    """Holds all trainable parameters and wires the per-scene forward pass."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.num_classes = len(CLASS_NAMES)
        mc = config.model
        self.model_dim = token_dim(
            config.scene.feature_dim, self.num_classes + 1, mc.size_embed_dim
        )
        self.encoder_config = EncoderConfig(
            layers=mc.encoder_layers,
            heads=mc.heads,
            model_dim=self.model_dim,
            ff_dim=mc.ff_mult * self.model_dim,
            dropout=mc.dropout,
        )
        rng = labeled_rng(config.seed, "model-init")
        self.prelim_head = init_head_params(
            config.scene.feature_dim, mc.head_hidden, self.num_classes, rng, "prelim_head"
        )
        if config.ablation.use_transformer:
            se = mc.size_embed_dim
            self.embed_w = (
                Parameter(rng.normal(0.0, 1.0, size=(1, se)), name="embed_w.weight"),
                Parameter(np.zeros(se), name="embed_w.bias"),
            )
            self.embed_h = (
                Parameter(rng.normal(0.0, 1.0, size=(1, se)), name="embed_h.weight"),
                Parameter(np.zeros(se), name="embed_h.bias"),
            )
            self.encoder_layers = init_encoder_params(self.encoder_config, rng)
            self.final_head = init_head_params(
                self.model_dim, mc.head_hidden, self.num_classes, rng, "final_head"
            )
        else:
            self.embed_w = None
            self.embed_h = None
            self.encoder_layers = []
            self.final_head: HeadParams | None = None

    def parameters(self) -> dict[str, Parameter]:
        params = dict(self.prelim_head.named("prelim_head"))
        if self.embed_w is not None:
            params["embed_w.weight"], params["embed_w.bias"] = self.embed_w
            params["embed_h.weight"], params["embed_h.bias"] = self.embed_h
        for i, layer in enumerate(self.encoder_layers):
            params.update(layer.named(f"encoder.layer{i}"))
        if self.final_head is not None:
            params.update(self.final_head.named("final_head"))
        return params

    def load_values(self, values: dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(values)
        extra = set(values) - set(params)
        if missing or extra:
            raise ValueError(
                f"checkpoint/model mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
            )
        for name, p in params.items():
            if p.data.shape != values[name].shape:
                raise ValueError(
                    f"checkpoint shape mismatch for {name}: "
                    f"{values[name].shape} vs {p.data.shape}"
                )
            p.data[...] = values[name]

    def forward(
        self,
        scene: Scene,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> ForwardResult:
        """One scene through both detection phases.

        Preliminary boxes are decoded outside the graph: relations, the
        decay matrix, positional encodings and size-embedding inputs all
        derive from them as constants. Only the preliminary logits keep
        a gradient path into the tokens.
        """
        ab = self.config.ablation
        prelim_logits, prelim_deltas = head_forward(
            Tensor(scene.features), self.prelim_head
        )
        prelim_boxes = decode_boxes(scene.proposals, prelim_deltas.data)
        if not ab.use_transformer:
            return ForwardResult(prelim_logits, prelim_deltas, prelim_boxes, None, None)

        tokens = build_tokens(
            scene.features,
            prelim_logits,
            prelim_boxes,
            self.embed_w,
            self.embed_h,
            scene.extent,
            log_size=self.config.model.log_size_embed,
        )
        relations = None
        decay = None
        if ab.use_relations or ab.use_adaptive:
            iou = pairwise_iou(prelim_boxes)
            dist = pairwise_center_distance(prelim_boxes)
            if ab.use_relations:
                relations = pairwise_relations(
                    prelim_boxes,
                    scene.extent,
                    log_area=self.config.model.log_area_relation,
                    iou_matrix=iou,
                )
            if ab.use_adaptive:
                decay = adaptive_decay(
                    prelim_boxes,
                    self.config.adaptive,
                    iou_matrix=iou,
                    dist_matrix=dist,
                    freeze_density=ab.freeze_density,
                    fixed_eps=ab.fixed_eps,
                    neighbor_sized_density=self.config.model.density_neighbor_sized,
                ).values
        x = encoder_forward(
            tokens,
            relations,
            decay,
            self.encoder_config,
            self.encoder_layers,
            rng=rng,
            training=training,
        )
        final_logits, final_deltas = head_forward(x, self.final_head)
        return ForwardResult(
            prelim_logits, prelim_deltas, prelim_boxes, final_logits, final_deltas
        )
