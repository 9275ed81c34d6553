"""Synthetic desk-scale fixture: tiny clips that are separable by construction.

Each class gets a distinct base color; every frame is that color plus seeded
noise, so small models can overfit the fixture in seconds. Clips are written
in the canonical directory-of-frames layout next to a valid manifest.
"""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np
from PIL import Image

from .manifest import ClassVocabulary, ClipManifest, ClipRecord, save_manifest
from .seeding import derive_seed

NOISE_SCALE = 0.08


def class_base_colors(num_classes: int) -> np.ndarray:
    """(M, 3) well-separated RGB colors in [0, 1], evenly spaced around the hue wheel."""
    colors = [colorsys.hsv_to_rgb(c / num_classes, 0.85, 0.85) for c in range(num_classes)]
    return np.asarray(colors, dtype=np.float64)


def make_synthetic_fixture(
    num_classes: int,
    clips_per_class: int,
    frame_count: int,
    image_size: int,
    seed: int,
    out_dir: str | Path,
    val_fraction: float = 0.5,
) -> ClipManifest:
    """Generate clips + manifest under out_dir; returns the loaded-equivalents manifest.

    Within each class, the last round(val_fraction * n) clips go to val (at
    least one when the class has two or more clips). Identical arguments
    reproduce identical pixel data and an identical manifest file.
    """
    if min(num_classes, clips_per_class, frame_count, image_size) < 1:
        raise ValueError("num_classes, clips_per_class, frame_count, and image_size must all be positive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    vocabulary = ClassVocabulary(tuple(f"class_{c}" for c in range(num_classes)))
    colors = class_base_colors(num_classes)

    n_val = int(round(val_fraction * clips_per_class))
    if clips_per_class >= 2:
        n_val = min(max(n_val, 1), clips_per_class - 1)
    else:
        n_val = 0

    records = []
    for label in range(num_classes):
        for clip_index in range(clips_per_class):
            clip_id = f"{vocabulary.names[label]}_clip{clip_index:03d}"
            clip_dir = out_dir / clip_id
            clip_dir.mkdir(exist_ok=True)
            rng = np.random.default_rng(derive_seed(seed, label, clip_index))
            for t in range(frame_count):
                noise = rng.normal(0.0, NOISE_SCALE, size=(image_size, image_size, 3))
                frame = np.clip(colors[label] + noise, 0.0, 1.0)
                pixels = np.round(frame * 255.0).astype(np.uint8)
                Image.fromarray(pixels, mode="RGB").save(clip_dir / f"frame_{t:04d}.png")
            records.append(
                ClipRecord(
                    clip_id=clip_id,
                    path=clip_id,
                    label_index=label,
                    split="val" if clip_index >= clips_per_class - n_val else "train",
                    frame_count=frame_count,
                )
            )

    manifest = ClipManifest(vocabulary=vocabulary, records=tuple(records), root=out_dir)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest
