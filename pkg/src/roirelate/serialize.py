"""Documented JSON schemas for scenes and detection sets.

Scene files ("roirelate-scene-v1"):
    seed, config_hash, extent,
    ground_truth: [{box: [x, y, w, h, alpha], label: <class name>}],
    proposals:   [[x, y, w, h, alpha], ...],
    features:    [[...], ...]           (row per proposal),
    layout:      {harbor_centers, sv_cluster_centers,
                  plane_row_centers, rule_radius},
    provenance:  {proposal_sources, ambiguous_objects}   (diagnostics)

Detection files ("roirelate-detections-v1"):
    config_hash, class_names,
    scenes: [{scene_seed, detections: [{box, label, score}],
              ground_truth: [...], layout: {...}}]
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import OrientedBox
from .heads import Detection
from .scenes import CLASS_NAMES, Scene, SceneLayout

SCENE_SCHEMA = "roirelate-scene-v1"
DETECTIONS_SCHEMA = "roirelate-detections-v1"


def _box_list(box: OrientedBox) -> list[float]:
    return [box.x, box.y, box.w, box.h, box.alpha]


def layout_to_dict(layout: SceneLayout) -> dict:
    return {
        "harbor_centers": [list(c) for c in layout.harbor_centers],
        "sv_cluster_centers": [list(c) for c in layout.sv_cluster_centers],
        "plane_row_centers": [list(c) for c in layout.plane_row_centers],
        "rule_radius": dict(layout.rule_radius),
    }


def layout_from_dict(data: dict) -> SceneLayout:
    return SceneLayout(
        harbor_centers=[tuple(c) for c in data["harbor_centers"]],
        sv_cluster_centers=[tuple(c) for c in data["sv_cluster_centers"]],
        plane_row_centers=[tuple(c) for c in data["plane_row_centers"]],
        rule_radius={k: float(v) for k, v in data["rule_radius"].items()},
    )


def scene_to_dict(scene: Scene, config_hash: str) -> dict:
    return {
        "schema": SCENE_SCHEMA,
        "seed": scene.seed,
        "config_hash": config_hash,
        "extent": scene.extent,
        "ground_truth": [
            {"box": _box_list(b), "label": CLASS_NAMES[c]}
            for b, c in zip(scene.gt_boxes, scene.gt_classes)
        ],
        "proposals": [_box_list(b) for b in scene.proposals],
        "features": scene.features.tolist(),
        "layout": layout_to_dict(scene.layout),
        "provenance": {
            "proposal_sources": scene.proposal_sources.tolist(),
            "ambiguous_objects": scene.ambiguous_objects.astype(int).tolist(),
        },
    }


def scene_from_dict(data: dict) -> Scene:
    if data.get("schema") != SCENE_SCHEMA:
        raise ValueError(f"unexpected scene schema {data.get('schema')!r}")
    gt_boxes = [OrientedBox.from_array(e["box"]) for e in data["ground_truth"]]
    gt_classes = np.array(
        [CLASS_NAMES.index(e["label"]) for e in data["ground_truth"]], dtype=np.int64
    )
    prov = data["provenance"]
    return Scene(
        seed=int(data["seed"]),
        extent=float(data["extent"]),
        gt_boxes=gt_boxes,
        gt_classes=gt_classes,
        proposals=[OrientedBox.from_array(b) for b in data["proposals"]],
        features=np.array(data["features"], dtype=np.float64),
        layout=layout_from_dict(data["layout"]),
        proposal_sources=np.array(prov["proposal_sources"], dtype=np.int64),
        ambiguous_objects=np.array(prov["ambiguous_objects"], dtype=bool),
    )


def detections_to_dict(
    scene_detections: list[list[Detection]],
    scenes: list[Scene],
    config_hash: str,
) -> dict:
    return {
        "schema": DETECTIONS_SCHEMA,
        "config_hash": config_hash,
        "class_names": list(CLASS_NAMES),
        "scenes": [
            {
                "scene_seed": scene.seed,
                "detections": [
                    {
                        "box": _box_list(d.box),
                        "label": CLASS_NAMES[d.label],
                        "score": d.score,
                    }
                    for d in dets
                ],
                "ground_truth": [
                    {"box": _box_list(b), "label": CLASS_NAMES[c]}
                    for b, c in zip(scene.gt_boxes, scene.gt_classes)
                ],
                "layout": layout_to_dict(scene.layout),
            }
            for dets, scene in zip(scene_detections, scenes)
        ],
    }


def detections_from_dict(data: dict):
    """Returns (scene_detections, scene_gt, layouts)."""
    if data.get("schema") != DETECTIONS_SCHEMA:
        raise ValueError(f"unexpected detections schema {data.get('schema')!r}")
    names = data["class_names"]
    scene_detections = []
    scene_gt = []
    layouts = []
    for i, entry in enumerate(data["scenes"]):
        dets = []
        for j, d in enumerate(entry["detections"]):
            try:
                dets.append(
                    Detection(
                        box=OrientedBox.from_array(d["box"]),
                        label=names.index(d["label"]),
                        score=float(d["score"]),
                    )
                )
            except (KeyError, ValueError) as err:
                raise ValueError(f"scenes[{i}].detections[{j}]: {err}") from err
        scene_detections.append(dets)
        boxes = [OrientedBox.from_array(e["box"]) for e in entry["ground_truth"]]
        classes = np.array(
            [names.index(e["label"]) for e in entry["ground_truth"]], dtype=np.int64
        )
        scene_gt.append((boxes, classes))
        layouts.append(layout_from_dict(entry["layout"]))
    return scene_detections, scene_gt, layouts


def dump_json(data: dict, path: str | Path):
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    Path(path).write_text(json.dumps(data, sort_keys=True, separators=(",", ": "), indent=1) + "\n")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
