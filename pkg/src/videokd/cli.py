"""Command-line pipeline: prepare | train-teacher | distill | eval | sweep | plot.

Exit codes are stable: 0 success, 1 I/O failure, 2 usage/config/artifact
error, 3 numerical failure (divergence). Run directories are named by a short
hash of the resolved config sections they depend on, so differing runs never
overwrite each other and identical reruns land in the same place.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from datetime import datetime
from pathlib import Path

from .config import ExperimentConfig, config_hash, config_to_yaml, load_experiment_config
from .errors import CheckpointError, ConfigError, FrameReadError, ManifestError, ModelBuildError, TrainingDiverged
from .evaluation import evaluate_model, format_confusion
from .history import read_history_csv, render_history_figure
from .manifest import ClipManifest, load_manifest, stratified_split
from .models import BackboneSpec, build_backbone, build_jointnet, build_student, map_classes
from .sampling import SamplingConfig
from .seeding import derive_seed
from .checkpoint import load_checkpoint
from .sweep import SweepPlan, format_sweep_report, run_sweep, write_sweep_report
from .synthetic import make_synthetic_fixture
from .training import TrainResult, distill_student, train_teacher

_BACKBONE_SEED = 101
_JOINTNET_SEED = 102
_STUDENT_SEED = 103


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ManifestError, CheckpointError, ModelBuildError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FrameReadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videokd",
        description="Teacher-student distillation pipeline for video action classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = _sub(sub, "prepare", "Write a clip manifest (from a clip tree or a synthetic fixture).")
    p.add_argument("--out", required=True, help="output directory for the manifest (and fixture frames)")
    p.add_argument("--synthetic", action="store_true", help="generate the synthetic color fixture")
    p.add_argument("--classes", type=int, default=4, help="fixture: number of classes")
    p.add_argument("--per-class", type=int, default=2, help="fixture: clips per class")
    p.add_argument("--frames", type=int, default=25, help="fixture: frames per clip")
    p.add_argument("--image-size", type=int, default=32, help="fixture: frame height/width")
    p.add_argument("--val-fraction", type=float, default=0.5, help="fixture: fraction of clips per class in val")
    p.add_argument("--src", help="directory of <class>/<clip> trees to catalog instead")
    p.add_argument("--split", type=float, default=0.8, help="src: train fraction for the stratified split")
    p.add_argument("--seed", type=int, default=0, help="seed for fixture pixels / split assignment")
    p.set_defaults(func=cmd_prepare)

    p = _sub(sub, "train-teacher", "Fine-tune the teacher on a manifest per the config.")
    _add_config_args(p)
    p.set_defaults(func=cmd_train_teacher)

    p = _sub(sub, "distill", "Distill the student against a trained teacher checkpoint.")
    _add_config_args(p)
    p.add_argument("--teacher", help="teacher checkpoint (default: the train-teacher run dir for this config)")
    p.set_defaults(func=cmd_distill)

    p = _sub(sub, "eval", "Evaluate a checkpoint on a manifest split.")
    p.add_argument("checkpoint", help="model checkpoint archive")
    p.add_argument("manifest", help="manifest file")
    p.add_argument("--split", default="val", choices=("train", "val"), help="which split to evaluate")
    p.add_argument("--batch-size", type=int, default=32, help="evaluation batch size")
    p.add_argument("--out", help="metrics JSON path (default: alongside the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = _sub(sub, "sweep", "Rerun the distillation pipeline across one axis of settings.")
    _add_config_args(p)
    p.add_argument("--axis", required=True, choices=("alpha", "backbone", "stage"), help="which knob to vary")
    p.add_argument(
        "--values",
        required=True,
        help="comma-separated settings (alpha: floats; stage: late/early; backbone: kind/identifier)",
    )
    p.add_argument("--runs", type=int, help="runs per setting (default: eval.run_count from the config)")
    p.set_defaults(func=cmd_sweep)

    p = _sub(sub, "plot", "Render the two-panel accuracy/loss figure from a history CSV.")
    p.add_argument("history", help="history CSV file")
    p.add_argument("--out", help="output image path (default: history file with .png suffix)")
    p.set_defaults(func=cmd_plot)
    return parser


def _sub(sub, name: str, help_text: str) -> argparse.ArgumentParser:
    return sub.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="experiment config YAML")
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE", help="override one config leaf")
    p.add_argument("--workdir", help="resolve relative paths against this directory")


def cmd_prepare(args) -> int:
    out = Path(args.out)
    if args.synthetic == bool(args.src):
        raise ConfigError("pass exactly one of --synthetic or --src")
    if args.synthetic:
        manifest = make_synthetic_fixture(
            num_classes=args.classes,
            clips_per_class=args.per_class,
            frame_count=args.frames,
            image_size=args.image_size,
            seed=args.seed,
            out_dir=out,
            val_fraction=args.val_fraction,
        )
    else:
        manifest = _catalog_clip_tree(Path(args.src), out, args.split, args.seed)
    counts = {split: len(manifest.split_records(split)) for split in ("train", "val")}
    print(f"manifest: {out / 'manifest.jsonl'}")
    print(f"classes ({manifest.num_classes}): {', '.join(manifest.vocabulary.names)}")
    print(f"clips: {len(manifest.records)} (train {counts['train']}, val {counts['val']})")
    return 0


def _catalog_clip_tree(src: Path, out: Path, train_fraction: float, seed: int) -> ClipManifest:
    """Catalog src/<class>/<clip> trees; clips are frame directories or video files."""
    from .manifest import ClassVocabulary, ClipRecord, save_manifest

    if not src.is_dir():
        raise ManifestError(f"source directory not found: {src}")
    class_dirs = sorted(d for d in src.iterdir() if d.is_dir())
    if not class_dirs:
        raise ManifestError(f"{src}: no class subdirectories")
    vocabulary = ClassVocabulary(tuple(d.name for d in class_dirs))

    out.mkdir(parents=True, exist_ok=True)
    records = []
    for label, class_dir in enumerate(class_dirs):
        for clip in sorted(class_dir.iterdir()):
            frame_count = _count_frames(clip)
            if frame_count == 0:
                continue
            records.append(
                ClipRecord(
                    clip_id=f"{class_dir.name}/{clip.name}",
                    path=str(Path(_relative_or_absolute(clip, out))),
                    label_index=label,
                    split="train",
                    frame_count=frame_count,
                )
            )
    if not records:
        raise ManifestError(f"{src}: no clips found")
    manifest = ClipManifest(vocabulary=vocabulary, records=tuple(records), root=out)
    manifest = stratified_split(manifest, train_fraction, seed)
    save_manifest(manifest, out / "manifest.jsonl")
    return manifest


def _count_frames(clip: Path) -> int:
    if clip.is_dir():
        from .sampling import _FRAME_FILE_RE

        return sum(1 for f in clip.iterdir() if _FRAME_FILE_RE.match(f.name))
    if clip.suffix.lower() in (".avi", ".mp4", ".mov", ".mkv", ".webm"):
        import cv2

        capture = cv2.VideoCapture(str(clip))
        try:
            return int(capture.get(cv2.CAP_PROP_FRAME_COUNT)) if capture.isOpened() else 0
        finally:
            capture.release()
    return 0


def _relative_or_absolute(target: Path, base: Path) -> Path:
    try:
        import os

        return Path(os.path.relpath(target.resolve(), base.resolve()))
    except ValueError:
        return target.resolve()


def _load_config_and_manifest(args) -> tuple[ExperimentConfig, ClipManifest, Path]:
    config = load_experiment_config(args.config, args.set)
    workdir = Path(args.workdir) if args.workdir else Path.cwd()
    manifest_path = Path(config.dataset.manifest)
    if not manifest_path.is_absolute():
        manifest_path = workdir / manifest_path
    output_dir = Path(config.output_dir)
    if not output_dir.is_absolute():
        output_dir = workdir / output_dir
    return config, load_manifest(manifest_path), output_dir


def _write_run_artifacts(run_dir: Path, config: ExperimentConfig, result: TrainResult, role: str) -> None:
    summary = {
        "role": role,
        "best": dataclasses.asdict(result.best),
        "final": dataclasses.asdict(result.history.final),
        "epochs": len(result.history),
        "checkpoints": {
            "best": str(result.best_checkpoint),
            "last": str(result.last_checkpoint),
        },
    }
    (run_dir / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (run_dir / "config.yaml").write_text(config_to_yaml(config), encoding="utf-8")
    with open(run_dir / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{datetime.now().isoformat()} {role} finished: best={result.best.val_acc:.6f}\n")


def cmd_train_teacher(args) -> int:
    config, manifest, output_dir = _load_config_and_manifest(args)
    seed = config.teacher.train.seed
    backbone = build_backbone(config.teacher.backbone, seed=derive_seed(seed, _BACKBONE_SEED))
    jointnet = build_jointnet(
        backbone,
        config.teacher.adapter,
        config.teacher.frontnet.resolve(manifest.num_classes),
        seed=derive_seed(seed, _JOINTNET_SEED),
    )
    run_dir = output_dir / f"teacher-{config_hash(config, 'dataset', 'teacher')}"
    result = train_teacher(jointnet, manifest, config.dataset.sampling, config.teacher.train, out_dir=run_dir)
    _write_run_artifacts(run_dir, config, result, "teacher")
    print(f"run dir: {run_dir}")
    print(f"best epoch {result.best.epoch}: val video top-1 {result.best.val_acc:.4f}")
    print(f"final epoch {result.history.final.epoch}: val video top-1 {result.history.final.val_acc:.4f}")
    return 0


def teacher_run_dir(config: ExperimentConfig, output_dir: Path) -> Path:
    return output_dir / f"teacher-{config_hash(config, 'dataset', 'teacher')}"


def cmd_distill(args) -> int:
    config, manifest, output_dir = _load_config_and_manifest(args)
    teacher_path = Path(args.teacher) if args.teacher else teacher_run_dir(config, output_dir) / "best.ckpt"
    if not teacher_path.is_file():
        raise CheckpointError(f"teacher checkpoint not found: {teacher_path} (run train-teacher first or pass --teacher)")
    teacher = load_checkpoint(teacher_path).model

    target_classes = manifest.num_classes
    if config.student.train.stage == "early":
        target_classes = config.teacher.backbone.output_dim
    student = build_student(
        config.student.spec.resolve(target_classes),
        seed=derive_seed(config.student.train.seed, _STUDENT_SEED),
    )
    run_dir = output_dir / f"student-{config_hash(config, 'dataset', 'teacher', 'student')}"
    result = distill_student(student, teacher, manifest, config.dataset.sampling, config.student.train, out_dir=run_dir)
    _write_run_artifacts(run_dir, config, result, "student")
    print(f"run dir: {run_dir}")
    print(f"teacher: {teacher_path}")
    print(f"best epoch {result.best.epoch}: val video top-1 {result.best.val_acc:.4f}")
    print(f"final epoch {result.history.final.epoch}: val video top-1 {result.history.final.val_acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    checkpoint_path = Path(args.checkpoint)
    loaded = load_checkpoint(checkpoint_path)
    manifest = load_manifest(args.manifest)

    sampling = SamplingConfig()
    if loaded.config and "sampling" in loaded.config:
        from .config import parse_experiment_config  # reuse the strict converter

        sampling = parse_experiment_config({"dataset": {"sampling": loaded.config["sampling"]}}).dataset.sampling

    model = loaded.model
    if model.num_classes != manifest.num_classes:
        if model.num_classes > manifest.num_classes:
            model = map_classes(model, list(range(manifest.num_classes)))
            print(f"note: model emits {loaded.model.num_classes} classes; using the first {manifest.num_classes}")
        else:
            raise CheckpointError(
                f"checkpoint emits {model.num_classes} classes but the manifest has {manifest.num_classes}"
            )

    report = evaluate_model(model, manifest, args.split, sampling, batch_size=args.batch_size)
    print(f"split: {args.split} ({report.num_clips} clips)")
    print(f"frame top-1: {report.frame_top1:.4f}")
    print(f"video top-1: {report.video_top1:.4f}")
    for name, acc in report.per_class_accuracy.items():
        print(f"  {name}: {acc:.4f}")
    print("confusion (rows true, columns predicted):")
    print(format_confusion(report.confusion, manifest.vocabulary.names))

    out = Path(args.out) if args.out else checkpoint_path.parent / f"eval-{args.split}-metrics.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"metrics written to {out}")
    return 0


def cmd_sweep(args) -> int:
    config, manifest, output_dir = _load_config_and_manifest(args)
    settings = _parse_sweep_values(args.axis, args.values, config)
    run_count = args.runs if args.runs is not None else config.eval.run_count
    seeds = tuple(config.eval.seeds[:run_count])
    if len(seeds) != run_count:
        raise ConfigError(f"config provides {len(config.eval.seeds)} seeds but {run_count} runs were requested")

    plan = SweepPlan(
        manifest=manifest,
        sampling=config.dataset.sampling,
        backbone=config.teacher.backbone,
        adapter=config.teacher.adapter,
        frontnet=config.teacher.frontnet.resolve(manifest.num_classes),
        teacher_train=config.teacher.train,
        student=config.student.spec.resolve(manifest.num_classes),
        student_train=config.student.train,
    )
    result = run_sweep(args.axis, settings, plan, run_count=run_count, seeds=seeds)

    run_dir = output_dir / f"sweep-{args.axis}-{config_hash(config)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    txt, js = write_sweep_report(result, run_dir / "report")
    print(format_sweep_report(result), end="")
    print(f"report written to {txt} and {js}")
    return 0


def _parse_sweep_values(axis: str, text: str, config: ExperimentConfig) -> list:
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values must list at least one setting")
    if axis == "alpha":
        try:
            return [float(v) for v in values]
        except ValueError:
            raise ConfigError(f"alpha values must be numbers, got {values}") from None
    if axis == "stage":
        return values
    specs = []
    for value in values:
        kind, _, identifier = value.partition("/")
        if not identifier:
            raise ConfigError(f"backbone values look like kind/identifier, got {value!r}")
        output_dim = 400 if kind == "pretrained-temporal" else config.teacher.backbone.output_dim
        specs.append(BackboneSpec(kind=kind, identifier=identifier, output_dim=output_dim, frozen=True))
    return specs


def cmd_plot(args) -> int:
    history_path = Path(args.history)
    history = read_history_csv(history_path)
    out = Path(args.out) if args.out else history_path.with_suffix(".png")
    render_history_figure(history, out)
    summary = {
        "epochs": len(history),
        "final": dataclasses.asdict(history.final),
        "best": dataclasses.asdict(history.best_epoch()),
    }
    summary_path = out.with_suffix(".json")
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"figure written to {out}")
    print(f"summary written to {summary_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
