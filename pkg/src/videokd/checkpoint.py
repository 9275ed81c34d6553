"""Checkpoint archives.

A checkpoint is a single zip holding: a manifest of state names/shapes/dtypes,
the raw arrays, the model's build specs as JSON (enough to rebuild the module
graph), and a format version. Training checkpoints additionally carry the
config snapshot, completed-epoch index, seed, history so far, and the
optimizer state needed for an exact resume.

Loading validates shapes against the rebuilt specs before accepting anything.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError, ModelBuildError
from .history import EpochRecord, RunHistory
from .models import (
    AdapterSpec,
    BackboneSpec,
    FrontNetSpec,
    ModelHandle,
    StudentSpec,
    build_backbone,
    build_jointnet,
    build_student,
    map_classes,
)

CHECKPOINT_VERSION = "1"

_FORMAT = "format.json"
_MANIFEST = "state_manifest.json"
_ARRAYS = "state.npz"
_SPECS = "specs.json"
_TRAIN = "train.json"
_OPTIM = "optim.pt"


@dataclass
class TrainState:
    """Training-side extras stored next to the model state."""

    epoch: int
    seed: int
    config: dict
    history: RunHistory
    optimizer: torch.optim.Optimizer | None = None


@dataclass
class LoadedCheckpoint:
    model: ModelHandle
    epoch: int | None = None
    seed: int | None = None
    config: dict | None = None
    history: RunHistory | None = None
    optimizer_state: dict | None = None


def save_checkpoint(model: ModelHandle, path: str | Path, train_state: TrainState | None = None) -> Path:
    """Write the archive; load_checkpoint(save_checkpoint(m)) reproduces m's outputs exactly."""
    if not model.build_info:
        raise CheckpointError("model handle carries no build specs; cannot checkpoint")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    state = {name: tensor.detach().cpu().numpy() for name, tensor in model.module.state_dict().items()}
    manifest = [{"name": n, "shape": list(a.shape), "dtype": str(a.dtype)} for n, a in sorted(state.items())]

    arrays = io.BytesIO()
    np.savez(arrays, **state)

    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        archive.writestr(_FORMAT, json.dumps({"format_version": CHECKPOINT_VERSION}))
        archive.writestr(_MANIFEST, json.dumps(manifest, sort_keys=True))
        archive.writestr(_ARRAYS, arrays.getvalue())
        archive.writestr(_SPECS, json.dumps(model.build_info, sort_keys=True))
        if train_state is not None:
            archive.writestr(
                _TRAIN,
                json.dumps(
                    {
                        "epoch": train_state.epoch,
                        "seed": train_state.seed,
                        "config": train_state.config,
                        "history": [asdict(r) for r in train_state.history],
                    },
                    sort_keys=True,
                ),
            )
            if train_state.optimizer is not None:
                buffer = io.BytesIO()
                torch.save(train_state.optimizer.state_dict(), buffer)
                archive.writestr(_OPTIM, buffer.getvalue())
    return path


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    """Rebuild the model from its specs and restore its exact state."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as archive:
            names = set(archive.namelist())
            required = {_FORMAT, _MANIFEST, _ARRAYS, _SPECS}
            if not required <= names:
                raise CheckpointError(f"{path}: missing archive entries {sorted(required - names)}")

            fmt = json.loads(archive.read(_FORMAT))
            if fmt.get("format_version") != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"{path}: format version {fmt.get('format_version')!r} "
                    f"not supported (expected {CHECKPOINT_VERSION!r})"
                )
            manifest = json.loads(archive.read(_MANIFEST))
            specs = json.loads(archive.read(_SPECS))
            with np.load(io.BytesIO(archive.read(_ARRAYS))) as npz:
                arrays = {name: npz[name] for name in npz.files}

            train_info = json.loads(archive.read(_TRAIN)) if _TRAIN in names else None
            optim_bytes = archive.read(_OPTIM) if _OPTIM in names else None
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, OSError) as exc:
        raise CheckpointError(f"{path}: corrupt or truncated checkpoint ({exc})") from None

    model = _rebuild(specs)
    _validate_state(path, model, manifest, arrays)
    model.module.load_state_dict({name: torch.from_numpy(array.copy()) for name, array in arrays.items()})
    model.eval_mode()

    loaded = LoadedCheckpoint(model=model)
    if train_info is not None:
        loaded.epoch = int(train_info["epoch"])
        loaded.seed = int(train_info["seed"])
        loaded.config = train_info["config"]
        history = RunHistory()
        for row in train_info["history"]:
            history.append(EpochRecord(**row))
        loaded.history = history
    if optim_bytes is not None:
        loaded.optimizer_state = torch.load(io.BytesIO(optim_bytes), weights_only=True)
    return loaded


def _rebuild(specs: dict) -> ModelHandle:
    kind = specs.get("kind")
    try:
        if kind == "student":
            return build_student(StudentSpec(**specs["student"]), seed=0)
        if kind == "backbone":
            return build_backbone(BackboneSpec(**specs["backbone"]), seed=0)
        if kind == "jointnet":
            backbone = build_backbone(BackboneSpec(**specs["backbone"]), seed=0)
            return build_jointnet(
                backbone,
                AdapterSpec(**specs["adapter"]),
                FrontNetSpec(**specs["frontnet"]),
                seed=0,
            )
        if kind == "class-slice":
            return map_classes(_rebuild(specs["inner"]), specs["indices"])
    except (ModelBuildError, TypeError, KeyError) as exc:
        raise CheckpointError(f"cannot rebuild model from stored specs: {exc}") from exc
    raise CheckpointError(f"unknown model kind in checkpoint specs: {kind!r}")


def _validate_state(path: Path, model: ModelHandle, manifest: list[dict], arrays: dict[str, np.ndarray]) -> None:
    expected = {
        name: (list(tensor.shape), str(tensor.detach().cpu().numpy().dtype))
        for name, tensor in model.module.state_dict().items()
    }
    listed = {entry["name"]: (entry["shape"], entry["dtype"]) for entry in manifest}
    if set(listed) != set(arrays):
        raise CheckpointError(f"{path}: manifest and stored arrays disagree on entry names")
    if set(expected) != set(listed):
        missing = sorted(set(expected) ^ set(listed))
        raise CheckpointError(f"{path}: state entries do not match the rebuilt specs, first differences: {missing[:4]}")
    for name, (shape, dtype) in listed.items():
        if list(arrays[name].shape) != list(shape) or str(arrays[name].dtype) != dtype:
            raise CheckpointError(f"{path}: array {name!r} does not match its manifest entry")
        if list(shape) != expected[name][0] or dtype != expected[name][1]:
            raise CheckpointError(
                f"{path}: {name!r} has shape {shape}/{dtype}, specs require {expected[name][0]}/{expected[name][1]}"
            )
