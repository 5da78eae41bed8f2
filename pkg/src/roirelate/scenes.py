"""Synthetic aerial-scene generator.

Stands in for a detection backbone + RPN: emits ground-truth layouts that
obey contextual rules (ships cluster at harbors in the water strip,
vehicles pack into parking clusters, planes line up in rows with shared
orientation, tennis courts come in parallel pairs), jittered proposals,
and prototype-plus-noise features. A configurable fraction of objects is
"ambiguous": its feature is drawn from a confusable class's prototype, so
only the surrounding context can recover the true class.

Everything is deterministic given (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import HALF_PI, OrientedBox, rotated_iou, wrap_half_pi
from .nn.rng import labeled_rng, seeded_rng

CLASS_NAMES = (
    "plane",
    "ship",
    "harbor",
    "small_vehicle",
    "large_vehicle",
    "tennis_court",
    "storage_tank",
    "helicopter",
)

# Designated confusable classes: an ambiguous object's feature is drawn
# from one of these prototypes instead of its own.
CONFUSION_MAP: dict[str, tuple[str, ...]] = {
    "plane": ("ship",),
    "ship": ("plane", "small_vehicle"),
    "small_vehicle": ("ship",),
    "tennis_court": ("large_vehicle",),
    "large_vehicle": ("tennis_court",),
}


@dataclass(frozen=True)
class ClassSize:
    """Log-normal size model: sqrt-area median, spread, and aspect ratio."""

    median_side: float
    log_std: float
    aspect: float
    aspect_log_std: float = 0.1

    def __post_init__(self):
        if self.median_side <= 0 or self.aspect <= 0:
            raise ValueError("size parameters must be positive")


def default_class_sizes() -> dict[str, ClassSize]:
    # Sizes and aspect ratios of confusable pairs overlap on purpose: the
    # token's size embedding alone must not give the class away, only the
    # tails differ (which is what makes mislabels show up as scale
    # outliers).
    return {
        "plane": ClassSize(10.0, 0.25, 2.0, 0.18),
        "ship": ClassSize(5.0, 0.35, 2.8, 0.18),
        "harbor": ClassSize(12.0, 0.10, 6.0, 0.10),
        "small_vehicle": ClassSize(2.8, 0.30, 2.2, 0.18),
        "large_vehicle": ClassSize(4.5, 0.30, 2.6, 0.18),
        "tennis_court": ClassSize(7.0, 0.25, 2.4, 0.18),
        "storage_tank": ClassSize(5.0, 0.15, 1.0, 0.05),
        "helicopter": ClassSize(6.0, 0.10, 1.4, 0.10),
    }


@dataclass(frozen=True)
class LayoutConfig:
    """Counts and geometry of the contextual placement rules.

    The waterline fraction varies per scene and the finished layout gets
    a random dihedral transform (rotation by a multiple of 90 degrees,
    optional mirror), so absolute position carries no class information:
    context must be read off neighboring objects.
    """

    water_frac_range: tuple[float, float] = (0.2, 0.5)
    randomize_orientation: bool = True
    harbor_count: tuple[int, int] = (1, 2)
    ships_per_harbor: tuple[int, int] = (2, 3)
    ship_radius: float = 9.0
    sv_cluster_count: tuple[int, int] = (1, 2)
    sv_per_cluster: tuple[int, int] = (2, 4)
    sv_cluster_radius: float = 4.5
    lv_per_cluster: tuple[int, int] = (1, 2)
    plane_row_count: tuple[int, int] = (1, 2)
    planes_per_row: tuple[int, int] = (2, 3)
    plane_spacing_factor: float = 1.25
    tennis_pair_count: tuple[int, int] = (1, 1)
    tennis_gap_factor: float = 1.15
    tank_count: tuple[int, int] = (1, 2)
    helicopter_count: tuple[int, int] = (0, 1)
    max_gt_overlap: float = 0.15
    # Probability that a vehicle cluster is planted next to a plane row
    # (service vehicles) and that the tennis courts adjoin the parking
    # area. Adjacent mixed groups are what make pure proximity
    # insufficient: alignment and size ratios are then needed to tell
    # the groups apart.
    context_adjacency: float = 0.6
    adjacency_distance: tuple[float, float] = (12.0, 22.0)


@dataclass(frozen=True)
class ProposalNoise:
    center_frac: float = 0.11
    size_log_std: float = 0.10
    angle_std: float = 0.07
    proposals_per_object: tuple[int, int] = (1, 2)
    background_fraction: float = 0.15
    background_max_iou: float = 0.3


@dataclass(frozen=True)
class SceneConfig:
    extent: float = 128.0
    feature_dim: int = 64
    feature_noise: float = 0.4
    ambiguity_rate: float = 0.3
    prototype_seed: int = 2024
    class_sizes: dict[str, ClassSize] = field(default_factory=default_class_sizes)
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    noise: ProposalNoise = field(default_factory=ProposalNoise)

    def __post_init__(self):
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        if not 0.0 <= self.ambiguity_rate < 1.0:
            raise ValueError("ambiguity_rate must be in [0, 1)")
        missing = set(CLASS_NAMES) - set(self.class_sizes)
        if missing:
            raise ValueError(f"class_sizes missing entries for {sorted(missing)}")

    @property
    def num_classes(self) -> int:
        return len(CLASS_NAMES)


@dataclass(frozen=True)
class SceneLayout:
    """Generation anchors, kept so contextual rules are checkable exactly.

    rule_radius maps a class name to the maximal distance from one of its
    anchors at which a detection of that class is contextually legal.
    """

    harbor_centers: list[tuple[float, float]]
    sv_cluster_centers: list[tuple[float, float]]
    plane_row_centers: list[tuple[float, float]]
    rule_radius: dict[str, float]

    def anchors_for(self, class_name: str) -> list[tuple[float, float]]:
        return {
            "ship": self.harbor_centers,
            "small_vehicle": self.sv_cluster_centers,
            "plane": self.plane_row_centers,
        }.get(class_name, [])


@dataclass
class Scene:
    """One simulated image: ground truth, proposals, features, provenance.

    proposal_sources and ambiguous_objects are generator-side diagnostics
    (used by tests and analysis); the detection pipeline must rediscover
    proposal-object correspondence through IoU assignment.
    """

    seed: int
    extent: float
    gt_boxes: list[OrientedBox]
    gt_classes: np.ndarray
    proposals: list[OrientedBox]
    features: np.ndarray
    layout: SceneLayout
    proposal_sources: np.ndarray
    ambiguous_objects: np.ndarray

    @property
    def n_proposals(self) -> int:
        return len(self.proposals)


def class_prototypes(config: SceneConfig) -> np.ndarray:
    """(C+1) x d_f fixed unit-norm prototypes; the last row is background.

    Drawn once per prototype_seed, so every scene of an experiment shares
    them.
    """
    rng = labeled_rng(config.prototype_seed, "class-prototypes")
    protos = rng.normal(size=(config.num_classes + 1, config.feature_dim))
    return protos / np.linalg.norm(protos, axis=1, keepdims=True)


# -- ground-truth layout --------------------------------------------------


def _sample_box(
    rng: np.random.Generator,
    spec: ClassSize,
    x: float,
    y: float,
    alpha: float,
    extent: float,
    size_scale: float = 1.0,
) -> OrientedBox:
    side = spec.median_side * size_scale * math.exp(rng.normal(0.0, spec.log_std))
    aspect = spec.aspect * math.exp(rng.normal(0.0, spec.aspect_log_std))
    w = side * math.sqrt(aspect)
    h = side / math.sqrt(aspect)
    half = 0.5 * math.hypot(w, h)
    x = float(np.clip(x, half, extent - half))
    y = float(np.clip(y, half, extent - half))
    return OrientedBox(x, y, w, h, wrap_half_pi(alpha))


def _accept(box: OrientedBox, existing: list[OrientedBox], max_iou: float) -> bool:
    return all(rotated_iou(box, other) <= max_iou for other in existing)


def _randint(rng: np.random.Generator, lo_hi: tuple[int, int]) -> int:
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def _dihedral(x: float, y: float, alpha: float, k: int, flip: bool, extent: float):
    """Apply one of the 8 square symmetries to a pose."""
    if flip:
        x = extent - x
        alpha = -alpha
    for _ in range(k):
        x, y = extent - y, x
        alpha = alpha + HALF_PI
    return x, y, wrap_half_pi(alpha)


def generate_scene(config: SceneConfig, seed: int) -> Scene:
    """Ground truth, proposals and features for one scene."""
    rng = seeded_rng(seed)
    lay = config.layout
    extent = config.extent
    sizes = config.class_sizes
    water_y = rng.uniform(*lay.water_frac_range) * extent

    boxes: list[OrientedBox] = []
    classes: list[int] = []

    def add(box: OrientedBox, class_name: str):
        boxes.append(box)
        classes.append(CLASS_NAMES.index(class_name))

    def try_add(class_name, x, y, alpha, size_scale=1.0, tries=20) -> OrientedBox | None:
        spec = sizes[class_name]
        for _ in range(tries):
            box = _sample_box(rng, spec, x, y, alpha, extent, size_scale)
            if _accept(box, boxes, lay.max_gt_overlap):
                add(box, class_name)
                return box
            x = x + rng.normal(0.0, 0.15 * spec.median_side)
            y = y + rng.normal(0.0, 0.15 * spec.median_side)
        return None

    # Harbors sit on the waterline; their ships cluster just offshore.
    harbor_centers: list[tuple[float, float]] = []
    for _ in range(_randint(rng, lay.harbor_count)):
        hx = rng.uniform(0.15, 0.85) * extent
        hy = water_y + rng.normal(0.0, 1.0)
        harbor = try_add("harbor", hx, hy, rng.normal(0.0, 0.1))
        if harbor is None:
            continue
        harbor_centers.append((harbor.x, harbor.y))
        for _ in range(_randint(rng, lay.ships_per_harbor)):
            r = rng.uniform(0.35, 1.0) * lay.ship_radius
            theta = rng.uniform(-math.pi, 0.0)  # offshore half-plane
            sx = harbor.x + r * math.cos(theta)
            sy = min(harbor.y + r * math.sin(theta), water_y - 2.0)
            try_add("ship", sx, sy, harbor.alpha + rng.normal(0.0, 0.35))

    def land_point(margin: float) -> tuple[float, float]:
        x = rng.uniform(margin, extent - margin)
        y = rng.uniform(min(water_y + margin, extent - margin - 1.0), extent - margin)
        return x, y

    def near_point(anchor: tuple[float, float], margin: float) -> tuple[float, float]:
        r = rng.uniform(*lay.adjacency_distance)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        x = float(np.clip(anchor[0] + r * math.cos(theta), margin, extent - margin))
        y = float(np.clip(anchor[1] + r * math.sin(theta), water_y + 4.0, extent - margin))
        return x, y

    # Plane rows: shared orientation and near-identical sizes.
    plane_rows: list[tuple[float, float]] = []
    plane_spec = sizes["plane"]
    for _ in range(_randint(rng, lay.plane_row_count)):
        cx, cy = land_point(margin=16.0)
        plane_rows.append((cx, cy))
        direction = rng.uniform(-math.pi / 2, math.pi / 2)
        row_alpha = direction + math.pi / 2  # noses perpendicular to the row
        count = _randint(rng, lay.planes_per_row)
        spacing = lay.plane_spacing_factor * plane_spec.median_side
        row_scale = math.exp(rng.normal(0.0, plane_spec.log_std))
        for k in range(count):
            offset = (k - (count - 1) / 2.0) * spacing
            try_add(
                "plane",
                cx + offset * math.cos(direction),
                cy + offset * math.sin(direction),
                row_alpha + rng.normal(0.0, 0.04),
                size_scale=row_scale * math.exp(rng.normal(0.0, 0.03)),
            )

    # Parking clusters: dense small vehicles with shared heading, plus a
    # short large-vehicle row at the cluster edge. Often right next to a
    # plane row, like service vehicles on an apron.
    sv_centers: list[tuple[float, float]] = []
    for _ in range(_randint(rng, lay.sv_cluster_count)):
        if plane_rows and rng.random() < lay.context_adjacency:
            anchor = plane_rows[int(rng.integers(len(plane_rows)))]
            cx, cy = near_point(anchor, margin=8.0)
        else:
            cx, cy = land_point(margin=10.0)
        sv_centers.append((cx, cy))
        heading = rng.uniform(-math.pi / 2, math.pi / 2)
        for _ in range(_randint(rng, lay.sv_per_cluster)):
            r = lay.sv_cluster_radius * math.sqrt(rng.uniform(0.0, 1.0))
            theta = rng.uniform(0.0, 2.0 * math.pi)
            try_add(
                "small_vehicle",
                cx + r * math.cos(theta),
                cy + r * math.sin(theta),
                heading + rng.normal(0.0, 0.08),
            )
        lv_spec = sizes["large_vehicle"]
        lv_offset = lay.sv_cluster_radius + lv_spec.median_side
        lv_dir = rng.uniform(0.0, 2.0 * math.pi)
        lx = cx + lv_offset * math.cos(lv_dir)
        ly = cy + lv_offset * math.sin(lv_dir)
        for k in range(_randint(rng, lay.lv_per_cluster)):
            step = k * lv_spec.median_side * 1.4
            try_add(
                "large_vehicle",
                lx + step * math.cos(heading),
                ly + step * math.sin(heading),
                heading + rng.normal(0.0, 0.05),
            )

    # Parallel tennis courts, usually by the parking area.
    tc_spec = sizes["tennis_court"]
    for _ in range(_randint(rng, lay.tennis_pair_count)):
        if sv_centers and rng.random() < lay.context_adjacency:
            cx, cy = near_point(sv_centers[int(rng.integers(len(sv_centers)))], margin=14.0)
        else:
            cx, cy = land_point(margin=14.0)
        alpha = rng.uniform(-math.pi / 2, math.pi / 2)
        gap = lay.tennis_gap_factor * tc_spec.median_side
        for sign in (-0.5, 0.5):
            try_add(
                "tennis_court",
                cx + sign * gap * math.cos(alpha + math.pi / 2),
                cy + sign * gap * math.sin(alpha + math.pi / 2),
                alpha,
            )

    # Isolated storage tanks and the occasional helicopter.
    for _ in range(_randint(rng, lay.tank_count)):
        x, y = land_point(margin=8.0)
        try_add("storage_tank", x, y, 0.0)
    for _ in range(_randint(rng, lay.helicopter_count)):
        x, y = land_point(margin=8.0)
        try_add("helicopter", x, y, rng.uniform(-math.pi / 2, math.pi / 2))

    gt_classes = np.array(classes, dtype=np.int64)

    # Scramble absolute geometry: the layout rules survive (they are
    # relative), but fixed screen positions stop predicting anything.
    if lay.randomize_orientation:
        k = int(rng.integers(4))
        flip = bool(rng.integers(2))

        def move_box(b: OrientedBox) -> OrientedBox:
            x, y, a = _dihedral(b.x, b.y, b.alpha, k, flip, extent)
            return OrientedBox(x, y, b.w, b.h, a)

        def move_pt(p):
            x, y, _ = _dihedral(p[0], p[1], 0.0, k, flip, extent)
            return (x, y)

        boxes = [move_box(b) for b in boxes]
        harbor_centers = [move_pt(p) for p in harbor_centers]
        sv_centers = [move_pt(p) for p in sv_centers]
        plane_rows = [move_pt(p) for p in plane_rows]

    layout = SceneLayout(
        harbor_centers=harbor_centers,
        sv_cluster_centers=sv_centers,
        plane_row_centers=plane_rows,
        rule_radius={
            "ship": 1.6 * lay.ship_radius,
            "small_vehicle": 2.5 * lay.sv_cluster_radius,
            "plane": 2.2 * lay.plane_spacing_factor * plane_spec.median_side,
        },
    )

    proposals, sources = perturb_proposals(boxes, config, rng)
    ambiguous = _draw_ambiguity(gt_classes, config, rng)
    features = synthesize_features(gt_classes, sources, ambiguous, config, rng)

    return Scene(
        seed=seed,
        extent=extent,
        gt_boxes=boxes,
        gt_classes=gt_classes,
        proposals=proposals,
        features=features,
        layout=layout,
        proposal_sources=sources,
        ambiguous_objects=ambiguous,
    )


# -- proposals ---------------------------------------------------------


def perturb_proposals(
    gt_boxes: list[OrientedBox],
    config: SceneConfig,
    rng: np.random.Generator,
) -> tuple[list[OrientedBox], np.ndarray]:
    """Jittered proposals per object plus uniform background proposals.

    Returns (proposals, source indices); sources are -1 for background.
    The proposal list is shuffled so ordering carries no provenance.
    """
    noise = config.noise
    extent = config.extent
    proposals: list[OrientedBox] = []
    sources: list[int] = []
    for gi, gt in enumerate(gt_boxes):
        for _ in range(_randint(rng, noise.proposals_per_object)):
            side = gt.scale
            proposals.append(
                OrientedBox(
                    x=gt.x + rng.normal(0.0, noise.center_frac * side),
                    y=gt.y + rng.normal(0.0, noise.center_frac * side),
                    w=gt.w * math.exp(rng.normal(0.0, noise.size_log_std)),
                    h=gt.h * math.exp(rng.normal(0.0, noise.size_log_std)),
                    alpha=wrap_half_pi(gt.alpha + rng.normal(0.0, noise.angle_std)),
                )
            )
            sources.append(gi)

    n_bg = int(round(noise.background_fraction * len(proposals)))
    sizes = list(config.class_sizes.values())
    for _ in range(n_bg):
        for _ in range(40):
            spec = sizes[int(rng.integers(len(sizes)))]
            box = _sample_box(
                rng,
                spec,
                rng.uniform(0.0, extent),
                rng.uniform(0.0, extent),
                rng.uniform(-math.pi / 2, math.pi / 2),
                extent,
            )
            if all(rotated_iou(box, g) < noise.background_max_iou for g in gt_boxes):
                proposals.append(box)
                sources.append(-1)
                break

    order = rng.permutation(len(proposals))
    proposals = [proposals[i] for i in order]
    src = np.array(sources, dtype=np.int64)[order]
    return proposals, src


# -- features -------------------------------------------------------------


def _draw_ambiguity(
    gt_classes: np.ndarray, config: SceneConfig, rng: np.random.Generator
) -> np.ndarray:
    """Per-object flags: ambiguous objects render as a confusable class."""
    flags = np.zeros(len(gt_classes), dtype=bool)
    for i, ci in enumerate(gt_classes):
        if CLASS_NAMES[ci] in CONFUSION_MAP:
            flags[i] = rng.random() < config.ambiguity_rate
    return flags


def synthesize_features(
    gt_classes: np.ndarray,
    sources: np.ndarray,
    ambiguous: np.ndarray,
    config: SceneConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Prototype-plus-noise features per proposal.

    Every proposal of an ambiguous object carries the confusable class's
    prototype (the object itself looks wrong, consistently); background
    proposals get the background prototype.
    """
    protos = class_prototypes(config)
    effective = gt_classes.copy()
    for i, flag in enumerate(ambiguous):
        if flag:
            options = CONFUSION_MAP[CLASS_NAMES[gt_classes[i]]]
            pick = options[int(rng.integers(len(options)))]
            effective[i] = CLASS_NAMES.index(pick)

    n = len(sources)
    feats = np.empty((n, config.feature_dim))
    for p, src in enumerate(sources):
        proto_idx = config.num_classes if src < 0 else int(effective[src])
        feats[p] = protos[proto_idx]
    feats += config.feature_noise * rng.normal(size=feats.shape)
    return feats
