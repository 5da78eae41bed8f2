"""Experiment configuration: a strict, hashable JSON surface.

Unknown fields are rejected with the offending path named — a silent typo
in an ablation switch would invalidate an experiment. Configs hash to a
stable hex digest recorded in every emitted artifact.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .adaptive import AdaptiveParams
from .heads import LossWeights
from .scenes import ClassSize, LayoutConfig, ProposalNoise, SceneConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass(frozen=True)
class ModelConfig:
    size_embed_dim: int = 16
    head_hidden: int = 64
    encoder_layers: int = 6
    heads: int = 4
    ff_mult: int = 4
    dropout: float = 0.1
    log_size_embed: bool = True
    log_area_relation: bool = True
    density_neighbor_sized: bool = True

    def __post_init__(self):
        if self.size_embed_dim < 1 or self.head_hidden < 1:
            raise ConfigError("model dims must be positive")


@dataclass(frozen=True)
class AblationSwitches:
    use_transformer: bool = True
    use_relations: bool = True
    use_adaptive: bool = True
    use_prelim_supervision: bool = True
    freeze_density: bool = False
    fixed_eps: bool = False

    def __post_init__(self):
        if (self.use_relations or self.use_adaptive) and not self.use_transformer:
            raise ConfigError(
                "ablation: use_relations/use_adaptive require use_transformer"
            )


@dataclass(frozen=True)
class OptimConfig:
    # The desk-scale default learning rate is higher than full-scale
    # training would use: a few hundred optimizer steps must reach
    # confident logits.
    lr: float = 3e-3
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # Step fractions at which the learning rate is scaled down, and the
    # factors applied there (mirroring a 12-epoch schedule with drops
    # after epochs 8 and 11).
    drop_fracs: tuple[float, float] = (2.0 / 3.0, 11.0 / 12.0)
    drop_factors: tuple[float, float] = (0.1, 0.01)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"optim.lr must be positive, got {self.lr}")
        if len(self.drop_fracs) != len(self.drop_factors):
            raise ConfigError("optim: drop_fracs and drop_factors must align")

    def lr_at(self, step: int, total_steps: int) -> float:
        lr = self.lr
        frac = step / max(1, total_steps)
        for f, factor in zip(self.drop_fracs, self.drop_factors):
            if frac >= f:
                lr = self.lr * factor
        return lr


@dataclass(frozen=True)
class AssignConfig:
    fg_threshold: float = 0.5
    bg_threshold: float = 0.5


@dataclass(frozen=True)
class AnalysisConfig:
    outlier_confidence: float = 0.9
    conflict_confidence: float = 0.5
    ap_iou_threshold: float = 0.5
    ap_interpolation: str = "all_points"
    chamfer_pairs: tuple[tuple[str, str], ...] = (
        ("ship", "small_vehicle"),
        ("ship", "harbor"),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    train_scenes: int = 100
    eval_scenes: int = 25
    epochs: int = 3
    scene: SceneConfig = field(default_factory=SceneConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    adaptive: AdaptiveParams = field(default_factory=AdaptiveParams)
    ablation: AblationSwitches = field(default_factory=AblationSwitches)
    optim: OptimConfig = field(default_factory=OptimConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    assign: AssignConfig = field(default_factory=AssignConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def __post_init__(self):
        if self.train_scenes < 0 or self.eval_scenes < 0 or self.epochs < 0:
            raise ConfigError("counts must be nonnegative")


# -- dict <-> dataclass conversion ----------------------------------------


def to_jsonable(obj):
    """Recursively convert dataclasses/tuples/numpy scalars to JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        }
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item) and getattr(obj, "ndim", None) == 0:
        return obj.item()
    return obj


def _convert(value, target_type, path: str):
    origin = typing.get_origin(target_type)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(target_type) if a is not type(None)]
        if value is None:
            return None
        return _convert(value, args[0], path)
    if dataclasses.is_dataclass(target_type):
        return from_dict(target_type, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        args = typing.get_args(target_type)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(
            _convert(v, t, f"{path}[{i}]") for i, (v, t) in enumerate(zip(value, args))
        )
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
        _, val_t = typing.get_args(target_type)
        return {k: _convert(v, val_t, f"{path}.{k}") for k, v in value.items()}
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data, path: str = "config"):
    """Build a dataclass from a dict, rejecting unknown fields."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _convert(data[f.name], hints[f.name], f"{path}.{f.name}")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"{path}: {err}") from err


def config_hash(config: ExperimentConfig) -> str:
    payload = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from err
    return from_dict(ExperimentConfig, data)


def save_config(config: ExperimentConfig, path: str | Path):
    Path(path).write_text(json.dumps(to_jsonable(config), indent=2, sort_keys=True) + "\n")


def apply_overrides(config: ExperimentConfig, overrides: dict[str, object]) -> ExperimentConfig:
    """Functional update by dotted path, e.g. {"ablation.use_adaptive": False}.

    All overrides are applied to the dict form first and validated in one
    pass, so combinations that are only consistent together work.
    """
    data = to_jsonable(config)
    for key, value in overrides.items():
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown override path {key!r}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"unknown override path {key!r}")
        node[parts[-1]] = value
    return from_dict(ExperimentConfig, data)
