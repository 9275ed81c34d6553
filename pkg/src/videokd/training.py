"""Two-phase training: teacher fine-tuning, then student distillation.

Runs are deterministic given (seed, config, data): model init, batch order,
and dropout streams are all derived from the run seed, per epoch, so a run
resumed from a checkpoint retraces exactly the epochs an uninterrupted run
would have produced.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import torch

from .batching import Batch, make_batches
from .checkpoint import LoadedCheckpoint, TrainState, load_checkpoint, save_checkpoint
from .errors import ModelBuildError, NonFiniteModelOutput, TrainingDiverged
from .evaluation import evaluate_model, split_mean_loss
from .history import EpochRecord, RunHistory, append_history_csv
from .losses import DistillParams, cross_entropy, distillation_loss
from .manifest import ClipManifest
from .models import JointNet, ModelHandle, extract_backbone, map_classes
from .sampling import SamplingConfig
from .seeding import SALT_TORCH, derive_seed

SCHEDULES = ("cosine-annealing", "constant")
STAGES = ("late", "early")


@dataclass(frozen=True)
class TeacherTrainConfig:
    epochs: int = 100
    batch_size: int = 64
    optimizer: str = "adaptive-moment"
    learning_rate: float = 1e-4
    schedule: str = "cosine-annealing"
    min_learning_rate: float = 0.0
    grad_clip_norm: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer != "adaptive-moment":
            raise ValueError(f"teacher optimizer must be 'adaptive-moment', got {self.optimizer!r}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if not 0.0 <= self.min_learning_rate <= self.learning_rate:
            raise ValueError("min_learning_rate must lie in [0, learning_rate]")


@dataclass(frozen=True)
class StudentTrainConfig:
    epochs: int = 200
    batch_size: int = 128
    optimizer: str = "momentum-sgd"
    learning_rate: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    distill: DistillParams = field(default_factory=DistillParams)
    stage: str = "late"
    cache_teacher_logits: bool = False
    grad_clip_norm: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer != "momentum-sgd":
            raise ValueError(f"student optimizer must be 'momentum-sgd', got {self.optimizer!r}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")


@dataclass
class TrainResult:
    model: ModelHandle
    history: RunHistory
    best: EpochRecord
    best_checkpoint: Path | None = None
    last_checkpoint: Path | None = None


def cosine_annealing_lr(epoch: int, total_epochs: int, base_lr: float, min_lr: float = 0.0) -> float:
    """min_lr + (base_lr - min_lr) * (1 + cos(pi * epoch / total_epochs)) / 2."""
    if total_epochs < 1:
        raise ValueError(f"total_epochs must be >= 1, got {total_epochs}")
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch must be in [0, {total_epochs}], got {epoch}")
    if not 0.0 <= min_lr <= base_lr:
        raise ValueError(f"need base_lr >= min_lr >= 0, got base={base_lr}, min={min_lr}")
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * epoch / total_epochs))


def train_teacher(
    jointnet: ModelHandle,
    manifest: ClipManifest,
    sampling: SamplingConfig,
    config: TeacherTrainConfig,
    out_dir: str | Path | None = None,
    resume: LoadedCheckpoint | str | Path | None = None,
    stop_after: int | None = None,
) -> TrainResult:
    """Fine-tune the teacher's adapter and head with hard-label cross entropy.

    The backbone must be frozen; its parameters are untouched. History is
    recorded every epoch (train video accuracy from a dedicated inference
    pass); best-val and last checkpoints are written when out_dir is given.
    ``stop_after`` interrupts the run after that many epochs; resuming from
    the written checkpoint retraces the uninterrupted run exactly.
    """
    if isinstance(jointnet.module, JointNet) and any(
        p.requires_grad for p in jointnet.module.backbone.parameters()
    ):
        raise ModelBuildError("teacher backbone has trainable parameters; freeze it before training")
    trainable = [p for p in jointnet.module.parameters() if p.requires_grad]
    if not trainable:
        raise ModelBuildError("jointnet has no trainable parameters; nothing to optimize")

    optimizer = torch.optim.Adam(trainable, lr=config.learning_rate)

    def lr_at(epoch: int) -> float:
        if config.schedule == "cosine-annealing":
            return cosine_annealing_lr(epoch, config.epochs, config.learning_rate, config.min_learning_rate)
        return config.learning_rate

    def loss_fn(batch: Batch):
        logits = jointnet.clip_logits(batch, sampling)
        loss = cross_entropy(logits, torch.from_numpy(batch.labels))
        return loss, float(loss.detach()), 0.0

    return _run_epochs(
        handle=jointnet,
        eval_handle=jointnet,
        manifest=manifest,
        sampling=sampling,
        optimizer=optimizer,
        epochs=config.epochs,
        batch_size=config.batch_size,
        seed=config.seed,
        lr_at=lr_at,
        loss_fn=loss_fn,
        val_loss_fn=lambda batch: loss_fn(batch)[0],
        blend=lambda ce, kl: ce,
        grad_clip_norm=config.grad_clip_norm,
        out_dir=out_dir,
        resume=resume,
        stop_after=stop_after,
        config_snapshot={"train": asdict(config), "sampling": asdict(sampling)},
    )


def distill_student(
    student: ModelHandle,
    teacher: ModelHandle,
    manifest: ClipManifest,
    sampling: SamplingConfig,
    config: StudentTrainConfig,
    out_dir: str | Path | None = None,
    resume: LoadedCheckpoint | str | Path | None = None,
    stop_after: int | None = None,
) -> TrainResult:
    """Train the student against the frozen teacher's soft targets.

    stage="late": targets are the teacher's class logits and the blended
    loss applies as configured. stage="early": targets are the raw backbone
    features (a jointnet teacher is unwrapped to its backbone automatically),
    the student head must match that width, and alpha is forced to 0 because
    hard labels live in a different class space; accuracies are then measured
    through the naive first-M class mapping.

    The teacher is put in inference mode and fully frozen; its parameters are
    never touched (checksum-stable).
    """
    params = config.distill
    if config.stage == "early":
        if isinstance(teacher.module, JointNet):
            teacher = extract_backbone(teacher)
        params = replace(params, alpha=0.0)
    for p in teacher.module.parameters():
        p.requires_grad_(False)
    teacher.fully_frozen = True
    teacher.eval_mode()

    if student.num_classes != teacher.num_classes:
        raise ModelBuildError(
            f"class-count mismatch: student emits {student.num_classes}, "
            f"teacher provides {teacher.num_classes} targets "
            f"(stage={config.stage!r}; size the student head accordingly)"
        )
    if config.stage == "late" and student.num_classes != manifest.num_classes:
        raise ModelBuildError(
            f"student emits {student.num_classes} classes but the manifest has {manifest.num_classes}"
        )

    eval_handle = student
    if student.num_classes != manifest.num_classes:
        eval_handle = map_classes(student, list(range(manifest.num_classes)))

    optimizer = torch.optim.SGD(
        [p for p in student.module.parameters() if p.requires_grad],
        lr=config.learning_rate,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )

    teacher_cache: dict[str, torch.Tensor] | None = {} if config.cache_teacher_logits else None
    if teacher_cache is not None and sampling.crop_strategy != "center":
        raise ValueError("cache_teacher_logits requires the deterministic center crop")

    def teacher_targets(batch: Batch) -> torch.Tensor:
        if teacher_cache is not None and all(cid in teacher_cache for cid in batch.clip_ids):
            return torch.stack([teacher_cache[cid] for cid in batch.clip_ids])
        with torch.no_grad():
            logits = teacher.clip_logits(batch, sampling)
        if teacher_cache is not None:
            for cid, row in zip(batch.clip_ids, logits):
                teacher_cache[cid] = row.detach().clone()
        return logits

    def loss_fn(batch: Batch):
        result = distillation_loss(
            student.clip_logits(batch, sampling),
            teacher_targets(batch),
            torch.from_numpy(batch.labels),
            params,
        )
        return result.total, float(result.cross_entropy.detach()), float(result.kl_divergence.detach())

    return _run_epochs(
        handle=student,
        eval_handle=eval_handle,
        manifest=manifest,
        sampling=sampling,
        optimizer=optimizer,
        epochs=config.epochs,
        batch_size=config.batch_size,
        seed=config.seed,
        lr_at=lambda epoch: config.learning_rate,
        loss_fn=loss_fn,
        val_loss_fn=lambda batch: loss_fn(batch)[0],
        blend=lambda ce, kl: params.alpha * ce + (1.0 - params.alpha) * kl,
        grad_clip_norm=config.grad_clip_norm,
        out_dir=out_dir,
        resume=resume,
        stop_after=stop_after,
        config_snapshot={"train": asdict(config), "sampling": asdict(sampling)},
    )


def _run_epochs(
    handle: ModelHandle,
    eval_handle: ModelHandle,
    manifest: ClipManifest,
    sampling: SamplingConfig,
    optimizer: torch.optim.Optimizer,
    epochs: int,
    batch_size: int,
    seed: int,
    lr_at: Callable[[int], float],
    loss_fn: Callable[[Batch], tuple[torch.Tensor, float, float]],
    val_loss_fn: Callable[[Batch], torch.Tensor],
    blend: Callable[[float, float], float],
    grad_clip_norm: float | None,
    out_dir: str | Path | None,
    resume: LoadedCheckpoint | str | Path | None,
    config_snapshot: dict,
    stop_after: int | None = None,
) -> TrainResult:
    history = RunHistory()
    start_epoch = 0
    if resume is not None:
        loaded = resume if isinstance(resume, LoadedCheckpoint) else load_checkpoint(resume)
        handle.module.load_state_dict(loaded.model.module.state_dict())
        if loaded.optimizer_state is not None:
            optimizer.load_state_dict(loaded.optimizer_state)
        if loaded.history is not None:
            history = loaded.history
        start_epoch = loaded.epoch or 0

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if start_epoch == 0 and (out_dir / "history.csv").exists():
            (out_dir / "history.csv").unlink()  # fresh runs must not append to stale rows

    end_epoch = epochs if stop_after is None else min(stop_after, epochs)
    clip_cache: dict = {}
    best_record: EpochRecord | None = history.best_epoch() if len(history) else None
    best_snapshot = None

    for epoch in range(start_epoch, end_epoch):
        lr = lr_at(epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr

        torch.manual_seed(derive_seed(seed, SALT_TORCH, epoch))
        handle.train_mode()
        ce_sum = kl_sum = 0.0
        batches = 0
        for step, batch in enumerate(
            make_batches(manifest, "train", batch_size, sampling, seed=derive_seed(seed, epoch), cache=clip_cache)
        ):
            total, ce_value, kl_value = loss_fn(batch)
            if not torch.isfinite(total):
                raise TrainingDiverged(epoch, step, float(total))
            optimizer.zero_grad()
            total.backward()
            if grad_clip_norm is not None:
                torch.nn.utils.clip_grad_norm_(
                    [p for g in optimizer.param_groups for p in g["params"]], grad_clip_norm
                )
            optimizer.step()
            if not all(torch.isfinite(p).all() for p in handle.module.parameters()):
                raise TrainingDiverged(epoch, step, float(total), what="parameters")
            ce_sum += ce_value
            kl_sum += kl_value
            batches += 1

        ce_part = ce_sum / batches
        kl_part = kl_sum / batches
        try:
            train_report = evaluate_model(eval_handle, manifest, "train", sampling, batch_size, cache=clip_cache)
            val_report = evaluate_model(eval_handle, manifest, "val", sampling, batch_size, cache=clip_cache)
            val_loss = split_mean_loss(handle, manifest, "val", sampling, val_loss_fn, batch_size, cache=clip_cache)
        except NonFiniteModelOutput as exc:
            raise TrainingDiverged(epoch, batches - 1, float("nan"), what="logits") from exc
        if not math.isfinite(val_loss):
            raise TrainingDiverged(epoch, batches - 1, val_loss, what="validation loss")
        record = EpochRecord(
            epoch=epoch,
            train_loss=blend(ce_part, kl_part),
            train_acc=train_report.video_top1,
            val_loss=val_loss,
            val_acc=val_report.video_top1,
            lr=lr,
            ce_part=ce_part,
            kl_part=kl_part,
        )
        history.append(record)
        if out_dir is not None:
            append_history_csv(record, out_dir / "history.csv")

        if best_record is None or (-record.val_acc, record.val_loss, record.epoch) < (
            -best_record.val_acc,
            best_record.val_loss,
            best_record.epoch,
        ):
            best_record = record
            if out_dir is not None:
                best_snapshot = (
                    copy.deepcopy(handle.module.state_dict()),
                    copy.deepcopy(optimizer.state_dict()),
                    epoch + 1,
                    copy.deepcopy(history.records),
                )

    assert best_record is not None
    best_path = last_path = None
    if out_dir is not None:
        last_path = save_checkpoint(
            handle,
            out_dir / "last.ckpt",
            TrainState(epoch=end_epoch, seed=seed, config=config_snapshot, history=history, optimizer=optimizer),
        )
        if best_snapshot is not None:
            live_state = copy.deepcopy(handle.module.state_dict())
            live_optim = copy.deepcopy(optimizer.state_dict())
            state, optim_state, upto, records = best_snapshot
            handle.module.load_state_dict(state)
            optimizer.load_state_dict(optim_state)
            best_path = save_checkpoint(
                handle,
                out_dir / "best.ckpt",
                TrainState(
                    epoch=upto,
                    seed=seed,
                    config=config_snapshot,
                    history=RunHistory(records=list(records)),
                    optimizer=optimizer,
                ),
            )
            handle.module.load_state_dict(live_state)
            optimizer.load_state_dict(live_optim)
        else:
            best_path = last_path
    return TrainResult(
        model=handle,
        history=history,
        best=best_record,
        best_checkpoint=best_path,
        last_checkpoint=last_path,
    )
