"""Command-line interface.

Subcommands: gen, train, eval, ablate, gradcheck, analyze.
Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numerical
failure (training divergence or a failed gradient check).
Every emitted artifact carries the config hash it was produced under.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    ConfigError,
    ExperimentConfig,
    config_hash,
    load_config,
    to_jsonable,
)
from .nn.rng import derive_seed
from .scenes import generate_scene
from .serialize import (
    detections_from_dict,
    detections_to_dict,
    dump_json,
    read_json,
    scene_to_dict,
)
from .training import (
    ARM_PRESETS,
    DivergenceError,
    RelationRefiner,
    evaluate,
    make_scenes,
    run_ablation_grid,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


def _say(args, message: str):
    if not args.quiet:
        print(message)


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        from .config import apply_overrides

        config = apply_overrides(config, {"seed": int(args.seed)})
    return config


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _guard_overwrite(args, *paths: Path):
    if args.force:
        return
    for p in paths:
        if p.exists():
            raise FileExistsError(f"{p} exists; pass --force to overwrite")


def cmd_gen(args) -> int:
    config = _load(args)
    out = _outdir(args)
    chash = config_hash(config)
    _guard_overwrite(args, out / "manifest.json")
    seeds = []
    for i in range(args.count):
        seed = derive_seed(config.seed, f"gen-scene-{i}")
        scene = generate_scene(config.scene, seed)
        dump_json(scene_to_dict(scene, chash), out / f"scene_{i:04d}.json")
        seeds.append(seed)
    dump_json(
        {
            "schema": "roirelate-scene-manifest-v1",
            "config_hash": chash,
            "count": args.count,
            "master_seed": config.seed,
            "scene_seeds": seeds,
        },
        out / "manifest.json",
    )
    _say(args, f"wrote {args.count} scenes to {out} (config {chash})")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load(args)
    out = _outdir(args)
    _guard_overwrite(args, out / "result.json")
    output = train(config)
    chash = output.result.config_hash
    dump_json({"config_hash": chash, "config": to_jsonable(config)}, out / "config.json")
    dump_json(output.result.to_jsonable(), out / "result.json")
    (out / "timing.json").write_text(
        json.dumps({"config_hash": chash, "wall_clock_s": output.result.wall_clock}) + "\n"
    )
    save_checkpoint(output.model.parameters(), out / "checkpoint", config.seed, chash)
    eval_scenes = make_scenes(config, "eval", config.eval_scenes)
    dump_json(
        detections_to_dict(output.eval_output.scene_detections, eval_scenes, chash),
        out / "detections.json",
    )
    m = output.result.metrics
    summary = [
        f"config {chash}  seed {config.seed}",
        f"steps {output.result.total_steps}  parameters {output.result.n_parameters}",
        f"loss curve: {['%.4f' % v for v in output.result.loss_curve]}",
        f"fg accuracy {m.fg_accuracy:.4f} over {m.fg_count} proposals",
        f"mAP {m.mean_ap if m.mean_ap is not None else float('nan'):.4f}",
        f"conflict rate {m.conflict.rate:.4f} ({m.conflict.violations}/{m.conflict.confident})",
        f"scale outliers {m.outliers.total_outliers}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    _say(args, "\n".join(summary))
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load(args)
    out = _outdir(args)
    _guard_overwrite(args, out / "metrics.json")
    chash = config_hash(config)
    values, manifest = load_checkpoint(args.checkpoint)
    if manifest["config_hash"] != chash:
        raise ConfigError(
            f"checkpoint was trained under config {manifest['config_hash']}, "
            f"current config hashes to {chash}"
        )
    if config.eval_scenes < 1:
        raise ConfigError("eval requires eval_scenes >= 1")
    model = RelationRefiner(config)
    model.load_values(values)
    scenes = make_scenes(config, "eval", config.eval_scenes)
    eval_out = evaluate(model, config, scenes)
    dump_json(
        {"config_hash": chash, "metrics": eval_out.metrics.to_jsonable()},
        out / "metrics.json",
    )
    dump_json(
        detections_to_dict(eval_out.scene_detections, scenes, chash),
        out / "detections.json",
    )
    _say(args, f"fg accuracy {eval_out.metrics.fg_accuracy:.4f} over {len(scenes)} scenes")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _load(args)
    out = _outdir(args)
    arms = ARM_PRESETS[args.arms]
    stem = f"ablation_{args.arms}"
    _guard_overwrite(args, out / f"{stem}.json")
    seeds = [derive_seed(config.seed, f"ablation-seed-{i}") for i in range(args.seeds)]
    grid = run_ablation_grid(config, arms, seeds)
    dump_json(grid.to_jsonable(), out / f"{stem}.json")
    table = grid.format_table()
    (out / f"{stem}.txt").write_text(table + "\n")
    _say(args, table)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .verification import run_gradcheck

    report = run_gradcheck(seed=args.seed or 0, inject_bug=args.inject_bug)
    for line in report.summary_lines():
        _say(args, line)
    worst = report.worst()
    if worst is not None:
        _say(args, f"worst checked group: {worst.name} (max_err={worst.max_error:.3e})")
    if args.out:
        out = _outdir(args)
        dump_json(
            {
                "schema": "roirelate-gradcheck-v1",
                "tolerance": report.tolerance,
                "step": report.step,
                "ok": report.ok,
                "groups": [
                    {
                        "name": e.name,
                        "max_error": e.max_error,
                        "passed": e.passed,
                        "no_grad_by_design": e.no_grad_by_design,
                    }
                    for e in report.entries
                ],
            },
            out / "gradcheck.json",
        )
    if not report.ok:
        _say(args, "gradient check FAILED")
        return EXIT_NUMERIC
    _say(args, "gradient check passed")
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .analysis import average_precision, category_chamfer, conflict_rate, scale_outliers
    from .scenes import CLASS_NAMES

    out = _outdir(args)
    scene_detections = []
    scene_gt = []
    layouts = []
    chash = None
    for path in args.detections:
        try:
            data = read_json(path)
            dets, gts, lays = detections_from_dict(data)
        except (json.JSONDecodeError, ValueError, KeyError) as err:
            print(f"malformed detections file {path}: {err}", file=sys.stderr)
            return EXIT_CONFIG
        chash = data.get("config_hash", chash)
        scene_detections.extend(dets)
        scene_gt.extend(gts)
        layouts.extend(lays)

    pooled = [d for dets in scene_detections for d in dets]
    outliers = scale_outliers(pooled, confidence_min=args.confidence)
    conflicts = conflict_rate(scene_detections, layouts)
    pairs = [("ship", "small_vehicle"), ("ship", "harbor"), ("ship", "plane")]
    chamfer = {f"{a}__{b}": category_chamfer(scene_detections, a, b) for a, b in pairs}
    ap = average_precision(scene_detections, scene_gt)

    dump_json(
        {
            "config_hash": chash,
            "confidence_min": outliers.confidence_min,
            "per_class": {
                name: {
                    "mean": s.mean,
                    "std": s.std,
                    "outliers": s.outliers,
                    "total": s.total,
                    "flagged": s.flagged,
                }
                for name, s in outliers.per_class.items()
            },
            "total_outliers": outliers.total_outliers,
        },
        out / "outliers.json",
    )
    dump_json(
        {
            "config_hash": chash,
            "pairs": {
                key: {
                    "mean": r.mean,
                    "qualifying_scenes": r.qualifying_scenes,
                    "skipped_scenes": r.skipped_scenes,
                }
                for key, r in chamfer.items()
            },
        },
        out / "chamfer.json",
    )
    dump_json(
        {
            "config_hash": chash,
            "rate": conflicts.rate,
            "violations": conflicts.violations,
            "confident": conflicts.confident,
        },
        out / "conflicts.json",
    )
    with open(out / "outliers.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "outliers", "total", "mean_scale", "std_scale"])
        for name in CLASS_NAMES:
            s = outliers.per_class[name]
            writer.writerow([name, s.outliers, s.total, s.mean, s.std])
    with open(out / "chamfer.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "mean", "qualifying_scenes", "skipped_scenes"])
        for key, r in chamfer.items():
            writer.writerow([key, r.mean, r.qualifying_scenes, r.skipped_scenes])
    lines = [
        f"scenes analyzed: {len(scene_detections)}",
        f"conflict rate: {conflicts.rate:.4f} ({conflicts.violations}/{conflicts.confident})",
        f"scale outliers: {outliers.total_outliers}",
        f"mAP: {ap.mean if ap.mean is not None else float('nan'):.4f}",
    ]
    for key, r in chamfer.items():
        mean = f"{r.mean:.2f}" if r.mean is not None else "no qualifying scenes"
        lines.append(f"chamfer {key}: {mean} ({r.qualifying_scenes} scenes)")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    _say(args, "\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roirelate",
        description="Relation-aware RoI refinement on synthetic aerial scenes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", type=str, default=None, help="JSON experiment config")
        if needs_out:
            p.add_argument("--out", type=str, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("gen", help="generate scene JSON files")
    common(p)
    p.add_argument("--count", type=int, default=10)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train and evaluate one configuration")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=str, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation grid")
    common(p)
    p.add_argument("--arms", choices=sorted(ARM_PRESETS), default="table5")
    p.add_argument("--seeds", type=int, default=5, help="number of matched seeds")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--force", action="store_true")
    p.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("analyze", help="evidential statistics over detection files")
    p.add_argument("--detections", type=str, nargs="+", required=True)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--confidence", type=float, default=0.9)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileExistsError as err:
        print(f"refusing to overwrite: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as err:
        print(f"training diverged: {err}", file=sys.stderr)
        print(json.dumps(err.diagnostics, indent=2), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
