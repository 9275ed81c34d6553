"""Clip manifests: the dataset's source of truth.

A manifest is a line-delimited JSON file. The first line is a header object
``{"version": ..., "class_names": [...]}``; each following line is one record
``{"clip_id", "path", "label", "split", "frame_count"}``. Labels are stored by
name, not index, so files stay readable and survive vocabulary reordering.

Record paths are resolved relative to the manifest file's directory, which
keeps manifests relocatable alongside their clip storage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ManifestError

MANIFEST_VERSION = "1"
SPLITS = ("train", "val")


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered class names; class index i refers to names[i]."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise ManifestError("vocabulary must contain at least one class")
        if any(not n for n in self.names):
            raise ManifestError("class names must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise ManifestError(f"duplicate class names in {list(self.names)}")

    @property
    def num_classes(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ManifestError(f"unknown label name {name!r}; known classes: {list(self.names)}") from None


@dataclass(frozen=True)
class ClipRecord:
    """One video clip: where it lives, its label, split, and length."""

    clip_id: str
    path: str
    label_index: int
    split: str
    frame_count: int

    def validate(self, vocabulary: ClassVocabulary) -> None:
        if not self.clip_id:
            raise ManifestError("clip_id must be non-empty")
        if self.split not in SPLITS:
            raise ManifestError(f"clip {self.clip_id!r}: split must be one of {SPLITS}, got {self.split!r}")
        if self.frame_count < 1:
            raise ManifestError(f"clip {self.clip_id!r}: frame_count must be >= 1, got {self.frame_count}")
        if not (0 <= self.label_index < vocabulary.num_classes):
            raise ManifestError(
                f"clip {self.clip_id!r}: label_index {self.label_index} out of range "
                f"for {vocabulary.num_classes} classes"
            )


@dataclass(frozen=True)
class ClipManifest:
    """A validated catalog of clips sharing one class vocabulary."""

    vocabulary: ClassVocabulary
    records: tuple[ClipRecord, ...]
    version: str = MANIFEST_VERSION
    root: Path = field(default_factory=Path, compare=False)

    def __post_init__(self):
        seen: set[str] = set()
        for record in self.records:
            record.validate(self.vocabulary)
            if record.clip_id in seen:
                raise ManifestError(f"duplicate clip_id {record.clip_id!r}")
            seen.add(record.clip_id)

    @property
    def num_classes(self) -> int:
        return self.vocabulary.num_classes

    def split_records(self, split: str) -> tuple[ClipRecord, ...]:
        if split not in SPLITS:
            raise ManifestError(f"split must be one of {SPLITS}, got {split!r}")
        return tuple(r for r in self.records if r.split == split)

    def resolve_path(self, record: ClipRecord) -> Path:
        path = Path(record.path)
        return path if path.is_absolute() else self.root / path


def load_manifest(path: str | Path) -> ClipManifest:
    """Load and validate a manifest file, reporting the offending line on failure."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ManifestError(f"{path}: empty manifest")

    header = _parse_line(path, 1, lines[0])
    _require_fields(path, 1, header, {"version", "class_names"})
    version = str(header["version"])
    if version != MANIFEST_VERSION:
        raise ManifestError(f"{path}: unsupported manifest version {version!r} (expected {MANIFEST_VERSION!r})")
    vocabulary = ClassVocabulary(tuple(header["class_names"]))

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        obj = _parse_line(path, lineno, line)
        _require_fields(path, lineno, obj, {"clip_id", "path", "label", "split", "frame_count"})
        try:
            record = ClipRecord(
                clip_id=str(obj["clip_id"]),
                path=str(obj["path"]),
                label_index=vocabulary.index_of(str(obj["label"])),
                split=str(obj["split"]),
                frame_count=int(obj["frame_count"]),
            )
            record.validate(vocabulary)
        except (ManifestError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}, line {lineno}: {exc}") from None
        records.append(record)

    try:
        return ClipManifest(vocabulary=vocabulary, records=tuple(records), version=version, root=path.parent)
    except ManifestError as exc:
        raise ManifestError(f"{path}: {exc}") from None


def save_manifest(manifest: ClipManifest, path: str | Path) -> Path:
    """Write a manifest in the line-delimited format; round-trips with load_manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"version": manifest.version, "class_names": list(manifest.vocabulary.names)}
    lines = [json.dumps(header, sort_keys=True)]
    for record in manifest.records:
        lines.append(
            json.dumps(
                {
                    "clip_id": record.clip_id,
                    "path": record.path,
                    "label": manifest.vocabulary.names[record.label_index],
                    "split": record.split,
                    "frame_count": record.frame_count,
                },
                sort_keys=True,
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def stratified_split(manifest: ClipManifest, train_fraction: float, seed: int) -> ClipManifest:
    """Reassign splits with a seeded, per-class (stratified) train/val partition.

    Each class keeps at least one val record whenever it has two or more clips,
    so tiny datasets still yield a usable val split.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ManifestError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[ClipRecord]] = {}
    for record in manifest.records:
        by_class.setdefault(record.label_index, []).append(record)

    reassigned: dict[str, str] = {}
    for label in sorted(by_class):
        group = by_class[label]
        order = rng.permutation(len(group))
        n_train = int(round(train_fraction * len(group)))
        if len(group) >= 2:
            n_train = min(max(n_train, 1), len(group) - 1)
        else:
            n_train = len(group)
        for rank, idx in enumerate(order):
            reassigned[group[idx].clip_id] = "train" if rank < n_train else "val"

    records = tuple(replace(r, split=reassigned[r.clip_id]) for r in manifest.records)
    return replace(manifest, records=records)


def label_array(records: Sequence[ClipRecord] | Iterable[ClipRecord]) -> np.ndarray:
    """Label indices of records as an int64 vector."""
    return np.asarray([r.label_index for r in records], dtype=np.int64)


def _parse_line(path: Path, lineno: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}, line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise ManifestError(f"{path}, line {lineno}: expected an object, got {type(obj).__name__}")
    return obj


def _require_fields(path: Path, lineno: int, obj: dict, required: set[str]) -> None:
    missing = required - obj.keys()
    if missing:
        raise ManifestError(f"{path}, line {lineno}: missing field(s) {sorted(missing)}")
    unknown = obj.keys() - required
    if unknown:
        raise ManifestError(f"{path}, line {lineno}: unknown field(s) {sorted(unknown)}")
