"""Frame-level and video-level accuracy metrics and whole-model evaluation.

The video-level rule: a clip counts as correct only when at least half of its
frames' top-1 predictions match the ground-truth label, i.e. frames_correct
>= ceil(frames_total / 2). Clip-level models contribute one prediction per
clip, which makes the rule coincide with plain top-1 for them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from .batching import make_batches
from .errors import NonFiniteModelOutput
from .history import RunHistory, render_history_figure, write_history_csv
from .manifest import ClipManifest
from .models import ModelHandle
from .sampling import SamplingConfig


@dataclass(frozen=True)
class FramePrediction:
    clip_id: str
    frame_index: int
    predicted: int
    true_label: int


@dataclass(frozen=True)
class VideoVerdict:
    clip_id: str
    frames_total: int
    frames_correct: int
    correct: bool


@dataclass
class EvalReport:
    """Everything one evaluation pass produces."""

    frame_top1: float
    video_top1: float
    per_class_accuracy: dict[str, float]
    confusion: np.ndarray  # rows = true class, columns = predicted (clip-level)
    verdicts: list[VideoVerdict] = field(default_factory=list)

    @property
    def num_clips(self) -> int:
        return len(self.verdicts)

    def to_dict(self) -> dict:
        return {
            "frame_top1": self.frame_top1,
            "video_top1": self.video_top1,
            "per_class_accuracy": dict(self.per_class_accuracy),
            "confusion": self.confusion.tolist(),
            "num_clips": self.num_clips,
        }


def topk_frame_accuracy(logits, labels, k: int) -> float:
    """Fraction of rows whose true label is among the k largest logits.

    Ties are broken toward the lower class index (stable sort), so results
    are reproducible across platforms.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2:
        raise ValueError(f"logits must be (N, M), got shape {z.shape}")
    if y.shape != (z.shape[0],):
        raise ValueError(f"labels must be ({z.shape[0]},), got shape {y.shape}")
    if not 1 <= k <= z.shape[1]:
        raise ValueError(f"k must be in [1, {z.shape[1]}], got {k}")
    ranked = np.argsort(-z, axis=1, kind="stable")[:, :k]
    hits = (ranked == y[:, None]).any(axis=1)
    return float(hits.mean())


def video_level_accuracy(frame_predictions: Iterable[FramePrediction]) -> tuple[float, list[VideoVerdict]]:
    """Apply the at-least-half-of-frames rule per clip; returns (accuracy, verdicts)."""
    totals: dict[str, int] = {}
    corrects: dict[str, int] = {}
    for pred in frame_predictions:
        totals[pred.clip_id] = totals.get(pred.clip_id, 0) + 1
        corrects[pred.clip_id] = corrects.get(pred.clip_id, 0) + int(pred.predicted == pred.true_label)
    if not totals:
        raise ValueError("no frame predictions given")

    verdicts = []
    for clip_id, n in totals.items():
        c = corrects[clip_id]
        verdicts.append(
            VideoVerdict(clip_id=clip_id, frames_total=n, frames_correct=c, correct=c >= (n + 1) // 2)
        )
    accuracy = sum(v.correct for v in verdicts) / len(verdicts)
    return float(accuracy), verdicts


def evaluate_model(
    model: ModelHandle,
    manifest: ClipManifest,
    split: str,
    config: SamplingConfig,
    batch_size: int = 32,
    cache: dict | None = None,
) -> EvalReport:
    """Deterministic full-split evaluation in inference mode.

    Frame predictions feed the video-level rule; the confusion matrix and
    per-class entries are clip-level (predicted class = argmax of the
    mean-aggregated clip logits, ties toward the lower index).
    """
    records = manifest.split_records(split)
    if not records:
        raise ValueError(f"manifest has no records in split {split!r}")
    model.eval_mode()

    m = manifest.num_classes
    frame_preds: list[FramePrediction] = []
    confusion = np.zeros((m, m), dtype=np.int64)
    with torch.no_grad():
        for batch in make_batches(manifest, split, batch_size, config, cache=cache, shuffle=False):
            flat, counts = model.frame_logits(batch, config)
            flat = flat.detach().cpu().numpy()
            if not np.isfinite(flat).all():
                raise NonFiniteModelOutput("model produced non-finite logits during evaluation")
            predicted = np.argmax(flat, axis=1)
            offset = 0
            for seq, count, label, clip_id in zip(batch.sequences, counts, batch.labels, batch.clip_ids):
                clip_frame_logits = flat[offset : offset + count]
                indices = seq.source_indices if count == seq.num_frames else range(count)
                for j, frame_index in enumerate(indices):
                    frame_preds.append(
                        FramePrediction(
                            clip_id=clip_id,
                            frame_index=int(frame_index),
                            predicted=int(predicted[offset + j]),
                            true_label=int(label),
                        )
                    )
                clip_prediction = int(np.argmax(clip_frame_logits.mean(axis=0)))
                confusion[int(label), clip_prediction] += 1
                offset += count

    frame_top1 = float(np.mean([p.predicted == p.true_label for p in frame_preds]))
    video_top1, verdicts = video_level_accuracy(frame_preds)

    label_of = {r.clip_id: r.label_index for r in records}
    per_class: dict[str, float] = {}
    for index, name in enumerate(manifest.vocabulary.names):
        scoped = [v for v in verdicts if label_of[v.clip_id] == index]
        if scoped:
            per_class[name] = float(sum(v.correct for v in scoped) / len(scoped))
    return EvalReport(
        frame_top1=frame_top1,
        video_top1=video_top1,
        per_class_accuracy=per_class,
        confusion=confusion,
        verdicts=verdicts,
    )


def split_mean_loss(
    model: ModelHandle,
    manifest: ClipManifest,
    split: str,
    config: SamplingConfig,
    loss_fn,
    batch_size: int = 32,
    cache: dict | None = None,
) -> float:
    """Mean of per-batch losses over a split, weighted by batch size."""
    model.eval_mode()
    total, n = 0.0, 0
    with torch.no_grad():
        for batch in make_batches(manifest, split, batch_size, config, cache=cache, shuffle=False):
            total += float(loss_fn(batch)) * len(batch)
            n += len(batch)
    return total / n


def export_curves(history: RunHistory, out_stem: str | Path) -> tuple[Path, Path]:
    """Write <stem>.csv (exact round-trip precision) and the <stem>.png figure."""
    if not len(history):
        raise ValueError("history is empty; nothing to export")
    out_stem = Path(out_stem)
    csv_path = write_history_csv(history, out_stem.with_suffix(".csv"))
    png_path = render_history_figure(history, out_stem.with_suffix(".png"))
    return csv_path, png_path


def format_confusion(confusion: np.ndarray, class_names: Sequence[str]) -> str:
    """Human-readable confusion table (rows true, columns predicted)."""
    width = max(12, max(len(n) for n in class_names) + 2)
    header = " " * width + "".join(f"{name:>{width}}" for name in class_names)
    lines = [header]
    for i, name in enumerate(class_names):
        lines.append(f"{name:>{width}}" + "".join(f"{int(v):>{width}}" for v in confusion[i]))
    return "\n".join(lines)
