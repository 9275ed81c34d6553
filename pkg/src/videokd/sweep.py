"""Ablation sweeps: vary one knob, rerun the distill pipeline, aggregate.

Each (setting, seed) run builds fresh models, trains the teacher (reusing a
cached teacher when the setting leaves it untouched, e.g. along the alpha
axis), distills the student, and records the final validation video top-1.
Runs execute sequentially and aggregate in setting order, so reports are
stable and diffable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .manifest import ClipManifest
from .models import (
    AdapterSpec,
    BackboneSpec,
    FrontNetSpec,
    StudentSpec,
    build_backbone,
    build_jointnet,
    build_student,
)
from .sampling import SamplingConfig
from .seeding import derive_seed
from .training import StudentTrainConfig, TeacherTrainConfig, distill_student, train_teacher

SWEEP_AXES = ("alpha", "backbone", "stage")

# Default run seeds for 5-run averaging; fixed so sweeps are reproducible.
DEFAULT_SWEEP_SEEDS = (11, 23, 37, 53, 71)

_BACKBONE_SEED = 101
_JOINTNET_SEED = 102
_STUDENT_SEED = 103


@dataclass(frozen=True)
class SweepPlan:
    """The base pipeline a sweep perturbs one axis of."""

    manifest: ClipManifest
    sampling: SamplingConfig
    backbone: BackboneSpec
    adapter: AdapterSpec
    frontnet: FrontNetSpec
    teacher_train: TeacherTrainConfig
    student: StudentSpec
    student_train: StudentTrainConfig


@dataclass
class SweepEntry:
    setting: object
    seeds: list[int]
    accuracies: list[float]
    mean_accuracy: float


@dataclass
class SweepResult:
    axis: str
    run_count: int
    entries: list[SweepEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "run_count": self.run_count,
            "entries": [
                {
                    "setting": _setting_repr(e.setting),
                    "seeds": e.seeds,
                    "accuracies": e.accuracies,
                    "mean_accuracy": e.mean_accuracy,
                }
                for e in self.entries
            ],
        }


def apply_setting(plan: SweepPlan, axis: str, setting) -> SweepPlan:
    """One perturbed copy of the plan; the setting type depends on the axis."""
    if axis == "alpha":
        distill = replace(plan.student_train.distill, alpha=float(setting))
        return replace(plan, student_train=replace(plan.student_train, distill=distill))
    if axis == "stage":
        return replace(plan, student_train=replace(plan.student_train, stage=str(setting)))
    if axis == "backbone":
        if not isinstance(setting, BackboneSpec):
            raise ValueError(f"backbone settings must be BackboneSpec values, got {type(setting).__name__}")
        adapter = replace(
            plan.adapter,
            layer_widths=(setting.output_dim,) + plan.adapter.layer_widths[1:-1] + (setting.output_dim,),
        )
        return replace(plan, backbone=setting, adapter=adapter)
    raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def run_sweep(
    axis: str,
    settings: list,
    plan: SweepPlan,
    run_count: int = 5,
    seeds: tuple[int, ...] = DEFAULT_SWEEP_SEEDS,
) -> SweepResult:
    """Full distill-then-evaluate pipeline for every (setting, seed) pair."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not settings:
        raise ValueError("settings must be non-empty")
    if len(seeds) != run_count:
        raise ValueError(f"need exactly run_count={run_count} seeds, got {len(seeds)}")

    teacher_cache: dict[tuple, object] = {}
    result = SweepResult(axis=axis, run_count=run_count)
    for setting in settings:
        varied = apply_setting(plan, axis, setting)
        accuracies = []
        for seed in seeds:
            try:
                accuracies.append(_run_once(varied, seed, teacher_cache))
            except Exception as exc:
                raise RuntimeError(f"sweep run failed for {axis}={_setting_repr(setting)}, seed={seed}: {exc}") from exc
        result.entries.append(
            SweepEntry(
                setting=setting,
                seeds=list(seeds),
                accuracies=accuracies,
                mean_accuracy=sum(accuracies) / len(accuracies),
            )
        )
    return result


def _run_once(plan: SweepPlan, seed: int, teacher_cache: dict) -> float:
    teacher_key = (
        json.dumps(
            {
                "backbone": asdict(plan.backbone),
                "adapter": asdict(plan.adapter),
                "frontnet": asdict(plan.frontnet),
                "train": asdict(plan.teacher_train),
            },
            sort_keys=True,
        ),
        seed,
    )
    teacher = teacher_cache.get(teacher_key)
    if teacher is None:
        backbone = build_backbone(plan.backbone, seed=derive_seed(seed, _BACKBONE_SEED))
        jointnet = build_jointnet(backbone, plan.adapter, plan.frontnet, seed=derive_seed(seed, _JOINTNET_SEED))
        teacher = train_teacher(
            jointnet,
            plan.manifest,
            plan.sampling,
            replace(plan.teacher_train, seed=seed),
        ).model
        teacher_cache[teacher_key] = teacher

    student_spec = plan.student
    if plan.student_train.stage == "early" and student_spec.num_classes != plan.backbone.output_dim:
        student_spec = replace(student_spec, num_classes=plan.backbone.output_dim)
    student = build_student(student_spec, seed=derive_seed(seed, _STUDENT_SEED))
    run = distill_student(
        student,
        teacher,
        plan.manifest,
        plan.sampling,
        replace(plan.student_train, seed=seed),
    )
    return run.history.final.val_acc


def _setting_repr(setting) -> object:
    if isinstance(setting, BackboneSpec):
        return asdict(setting)
    return setting


def format_sweep_report(result: SweepResult) -> str:
    """Stable human-readable table; floats at fixed width for clean diffs."""
    lines = [
        f"axis: {result.axis}",
        f"run_count: {result.run_count}",
        "",
        f"{'setting':<42} {'mean_acc':>12}  per-run (seed: accuracy)",
    ]
    for entry in result.entries:
        per_run = ", ".join(f"{s}: {a:.6f}" for s, a in zip(entry.seeds, entry.accuracies))
        lines.append(f"{json.dumps(_setting_repr(entry.setting)):<42} {entry.mean_accuracy:>12.6f}  {per_run}")
    return "\n".join(lines) + "\n"


def write_sweep_report(result: SweepResult, out_stem: str | Path) -> tuple[Path, Path]:
    """Write <stem>.txt (table) and <stem>.json (machine-readable, full precision)."""
    out_stem = Path(out_stem)
    out_stem.parent.mkdir(parents=True, exist_ok=True)
    txt = out_stem.with_suffix(".txt")
    txt.write_text(format_sweep_report(result), encoding="utf-8")
    js = out_stem.with_suffix(".json")
    js.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return txt, js
