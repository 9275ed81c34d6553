"""Frame sampling and preprocessing.

Clips are stored either as a directory of numbered images (``frame_0000.png``,
the canonical fixture layout) or as a single video file. Frames are sampled at
evenly spaced temporal positions, resized and cropped to a square, and scaled
to [0, 1] RGB float32.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FrameReadError
from .manifest import ClipManifest, ClipRecord
from .seeding import SALT_AUGMENT, derive_seed

CROP_STRATEGIES = ("center", "random-scale-center")

_FRAME_FILE_RE = re.compile(r"^frame_(\d+)\.(png|jpg|jpeg|bmp)$", re.IGNORECASE)


@dataclass(frozen=True)
class SamplingConfig:
    """How frames are drawn from a clip and shaped for the models.

    ``normalize_mean``/``normalize_std`` are optional per-channel constants
    applied at the model input boundary (see apply_normalization); frames
    themselves always stay in [0, 1].
    """

    num_frames: int = 8
    crop_size: int = 224
    crop_strategy: str = "center"
    seed: int = 0
    normalize_mean: tuple[float, float, float] | None = None
    normalize_std: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.num_frames < 1:
            raise ValueError(f"num_frames must be >= 1, got {self.num_frames}")
        if self.crop_size < 8:
            raise ValueError(f"crop_size must be >= 8, got {self.crop_size}")
        if self.crop_strategy not in CROP_STRATEGIES:
            raise ValueError(f"crop_strategy must be one of {CROP_STRATEGIES}, got {self.crop_strategy!r}")
        if (self.normalize_mean is None) != (self.normalize_std is None):
            raise ValueError("normalize_mean and normalize_std must be given together")


@dataclass(frozen=True)
class FrameSequence:
    """An ordered stack of preprocessed frames for one clip.

    frames: (T, H, W, 3) float32 in [0, 1]; source_indices: which original
    frames were sampled, strictly increasing.
    """

    clip_id: str
    frames: np.ndarray
    source_indices: tuple[int, ...]

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[3] != 3:
            raise ValueError(f"frames must be (T, H, W, 3), got {self.frames.shape}")
        if len(self.source_indices) != self.frames.shape[0]:
            raise ValueError("source_indices length must match frame count")
        if any(b <= a for a, b in zip(self.source_indices, self.source_indices[1:])):
            raise ValueError(f"source_indices must be strictly increasing, got {self.source_indices}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def uniform_frame_indices(frame_count: int, num_frames: int) -> list[int]:
    """Indices of k = min(num_frames, frame_count) segment centers.

    index_i = floor((i + 0.5) * frame_count / k), evaluated in exact integer
    arithmetic. Strictly increasing, covers the clip span, and reduces to the
    identity when k == frame_count.
    """
    if frame_count < 1:
        raise ValueError(f"frame_count must be >= 1, got {frame_count}")
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")
    k = min(num_frames, frame_count)
    return [((2 * i + 1) * frame_count) // (2 * k) for i in range(k)]


def sample_uniform(record: ClipRecord, config: SamplingConfig) -> list[int]:
    """Deterministic evenly spaced frame indices for one clip."""
    return uniform_frame_indices(record.frame_count, config.num_frames)


def preprocess_clip(
    record: ClipRecord,
    config: SamplingConfig,
    root: Path | str = ".",
    rng: np.random.Generator | None = None,
) -> FrameSequence:
    """Decode, crop, and scale the uniformly sampled frames of one clip.

    With crop_strategy="center" the output is a pure function of the clip
    bytes and config. "random-scale-center" draws a scale jitter from ``rng``;
    when no rng is passed it is seeded from (config.seed, clip_id), so
    repeated calls still agree.
    """
    indices = sample_uniform(record, config)
    raw = _decode_frames(record, indices, Path(root))
    if config.crop_strategy == "random-scale-center" and rng is None:
        rng = np.random.default_rng(derive_seed(config.seed, SALT_AUGMENT, record.clip_id))

    frames = np.empty((len(raw), config.crop_size, config.crop_size, 3), dtype=np.float32)
    for t, image in enumerate(raw):
        frames[t] = _crop_resize(image, config, rng) / np.float32(255.0)
    return FrameSequence(clip_id=record.clip_id, frames=frames, source_indices=tuple(indices))


def preprocess_from_manifest(
    manifest: ClipManifest,
    record: ClipRecord,
    config: SamplingConfig,
    rng: np.random.Generator | None = None,
) -> FrameSequence:
    """preprocess_clip with paths resolved against the manifest root."""
    return preprocess_clip(record, config, root=manifest.root, rng=rng)


def apply_normalization(frames: np.ndarray, config: SamplingConfig) -> np.ndarray:
    """Optional per-channel (x - mean) / std at the model input boundary."""
    if config.normalize_mean is None:
        return frames
    mean = np.asarray(config.normalize_mean, dtype=np.float32)
    std = np.asarray(config.normalize_std, dtype=np.float32)
    return (frames - mean) / std


def _decode_frames(record: ClipRecord, indices: list[int], root: Path) -> list[np.ndarray]:
    """Decode the requested frame indices as uint8 RGB arrays."""
    path = Path(record.path)
    if not path.is_absolute():
        path = root / path
    if path.is_dir():
        return _decode_from_directory(record, indices, path)
    if path.is_file():
        return _decode_from_video(record, indices, path)
    raise FrameReadError(record.clip_id, indices[0], f"clip storage not found: {path}")


def _decode_from_directory(record: ClipRecord, indices: list[int], directory: Path) -> list[np.ndarray]:
    from PIL import Image, UnidentifiedImageError

    files: dict[int, Path] = {}
    for entry in directory.iterdir():
        match = _FRAME_FILE_RE.match(entry.name)
        if match:
            files[int(match.group(1))] = entry

    frames = []
    for index in indices:
        if index not in files:
            raise FrameReadError(record.clip_id, index, f"no frame file for index {index} in {directory}")
        try:
            with Image.open(files[index]) as img:
                frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
        except (OSError, UnidentifiedImageError) as exc:
            raise FrameReadError(record.clip_id, index, f"cannot decode {files[index]}: {exc}") from None
    return frames


def _decode_from_video(record: ClipRecord, indices: list[int], path: Path) -> list[np.ndarray]:
    import cv2

    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise FrameReadError(record.clip_id, indices[0], f"cannot open video {path}")
    wanted = set(indices)
    frames: dict[int, np.ndarray] = {}
    position = 0
    try:
        # Sequential read: frame-accurate seeking is codec-dependent, counting is not.
        while position <= indices[-1]:
            ok, frame = capture.read()
            if not ok:
                break
            if position in wanted:
                frames[position] = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB).astype(np.uint8)
            position += 1
    finally:
        capture.release()
    missing = [i for i in indices if i not in frames]
    if missing:
        raise FrameReadError(record.clip_id, missing[0], f"video {path} ended before frame {missing[0]}")
    return [frames[i] for i in indices]


def _crop_resize(image: np.ndarray, config: SamplingConfig, rng: np.random.Generator | None) -> np.ndarray:
    """Resize the shorter side to (scale * crop_size) and take the center square."""
    import cv2

    size = config.crop_size
    scale = 1.0
    if config.crop_strategy == "random-scale-center":
        assert rng is not None
        scale = float(rng.uniform(1.0, 1.25))

    height, width = image.shape[:2]
    target_short = max(size, int(round(size * scale)))
    factor = target_short / min(height, width)
    new_w = max(size, int(round(width * factor)))
    new_h = max(size, int(round(height * factor)))
    interpolation = cv2.INTER_AREA if factor < 1.0 else cv2.INTER_LINEAR
    resized = cv2.resize(image, (new_w, new_h), interpolation=interpolation)

    top = (new_h - size) // 2
    left = (new_w - size) // 2
    return resized[top : top + size, left : left + size]
