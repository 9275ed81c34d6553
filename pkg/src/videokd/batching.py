"""Deterministic batch iteration over a manifest split."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .manifest import ClipManifest
from .sampling import FrameSequence, SamplingConfig, preprocess_from_manifest
from .seeding import SALT_AUGMENT, SALT_SHUFFLE, derive_seed


@dataclass
class Batch:
    """A FrameSequence batch with aligned labels.

    sequences may have differing frame counts (clips shorter than
    num_frames contribute all their frames); stacked_frames() requires a
    uniform count, flat_frames() never does.
    """

    sequences: list[FrameSequence]
    labels: np.ndarray  # (B,) int64
    clip_ids: list[str]

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def frame_counts(self) -> list[int]:
        return [seq.num_frames for seq in self.sequences]

    def stacked_frames(self) -> np.ndarray:
        """(B, T, H, W, 3) float32; clip-level models need a uniform T."""
        counts = set(self.frame_counts)
        if len(counts) > 1:
            raise ValueError(
                f"clips in this batch sampled unequal frame counts {sorted(counts)}; "
                "set num_frames <= the shortest clip to stack them"
            )
        return np.stack([seq.frames for seq in self.sequences])

    def flat_frames(self) -> np.ndarray:
        """(sum of T_i, H, W, 3) float32 for per-frame models."""
        return np.concatenate([seq.frames for seq in self.sequences])

    def frame_labels(self) -> np.ndarray:
        """Labels repeated per frame, aligned with flat_frames()."""
        return np.repeat(self.labels, self.frame_counts)


def make_batches(
    manifest: ClipManifest,
    split: str,
    batch_size: int,
    config: SamplingConfig,
    seed: int = 0,
    cache: dict | None = None,
    shuffle: bool | None = None,
) -> Iterator[Batch]:
    """Yield every record of the split exactly once, in batches.

    Train order is a seeded permutation; val order is manifest order
    (``shuffle`` overrides either default, e.g. for evaluating the train
    split in place). The final partial batch is emitted. ``cache`` may hold
    decoded FrameSequences keyed by clip_id; it is only consulted for the
    deterministic center crop.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    records = manifest.split_records(split)
    if not records:
        raise ValueError(f"manifest has no records in split {split!r}")

    if shuffle is None:
        shuffle = split == "train"
    order = np.arange(len(records))
    if shuffle:
        order = np.random.default_rng(derive_seed(seed, SALT_SHUFFLE)).permutation(len(records))

    cacheable = config.crop_strategy == "center"
    for start in range(0, len(records), batch_size):
        chosen = [records[i] for i in order[start : start + batch_size]]
        sequences = []
        for record in chosen:
            if cache is not None and cacheable and record.clip_id in cache:
                sequences.append(cache[record.clip_id])
                continue
            rng = None
            if config.crop_strategy == "random-scale-center":
                rng = np.random.default_rng(derive_seed(seed, SALT_AUGMENT, record.clip_id))
            seq = preprocess_from_manifest(manifest, record, config, rng=rng)
            if cache is not None and cacheable:
                cache[record.clip_id] = seq
            sequences.append(seq)
        yield Batch(
            sequences=sequences,
            labels=np.asarray([r.label_index for r in chosen], dtype=np.int64),
            clip_ids=[r.clip_id for r in chosen],
        )
