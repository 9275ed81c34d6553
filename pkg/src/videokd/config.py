"""Experiment configuration: one YAML document for the whole pipeline.

The file parses strictly into the typed configs used across the package;
unknown keys are rejected with their dotted path. ``num_classes`` may be
left null in the model sections, in which case it resolves to the manifest's
class count at build time. Single leaves can be overridden from the command
line with dotted paths, e.g. ``student.train.distill.alpha=0.95``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .models import AdapterSpec, BackboneSpec, FrontNetSpec, StudentSpec
from .sampling import SamplingConfig
from .sweep import DEFAULT_SWEEP_SEEDS
from .training import StudentTrainConfig, TeacherTrainConfig


@dataclass(frozen=True)
class FrontNetConfig:
    hidden_widths: tuple[int, ...] = (256, 128)
    num_classes: int | None = None

    def resolve(self, manifest_classes: int) -> FrontNetSpec:
        n = self.num_classes if self.num_classes is not None else manifest_classes
        if n != manifest_classes:
            raise ConfigError(f"frontnet num_classes={n} but the manifest has {manifest_classes} classes")
        return FrontNetSpec(num_classes=n, hidden_widths=self.hidden_widths)


@dataclass(frozen=True)
class StudentSpecConfig:
    architecture: str = "small-residual-2d"
    num_classes: int | None = None
    dropout_rate: float = 0.0

    def resolve(self, num_classes: int) -> StudentSpec:
        n = self.num_classes if self.num_classes is not None else num_classes
        return StudentSpec(architecture=self.architecture, num_classes=n, dropout_rate=self.dropout_rate)


@dataclass(frozen=True)
class DatasetSection:
    manifest: str = "manifest.jsonl"
    sampling: SamplingConfig = field(default_factory=SamplingConfig)


@dataclass(frozen=True)
class TeacherSection:
    backbone: BackboneSpec = field(default_factory=lambda: BackboneSpec(kind="synthetic-tiny"))
    adapter: AdapterSpec = field(default_factory=AdapterSpec)
    frontnet: FrontNetConfig = field(default_factory=FrontNetConfig)
    train: TeacherTrainConfig = field(default_factory=TeacherTrainConfig)


@dataclass(frozen=True)
class StudentSection:
    spec: StudentSpecConfig = field(default_factory=StudentSpecConfig)
    train: StudentTrainConfig = field(default_factory=StudentTrainConfig)


@dataclass(frozen=True)
class EvalSection:
    run_count: int = 5
    seeds: tuple[int, ...] = DEFAULT_SWEEP_SEEDS

    def __post_init__(self):
        if self.run_count < 1:
            raise ValueError(f"run_count must be >= 1, got {self.run_count}")
        if len(self.seeds) != self.run_count:
            raise ValueError(f"need exactly run_count={self.run_count} seeds, got {len(self.seeds)}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    teacher: TeacherSection = field(default_factory=TeacherSection)
    student: StudentSection = field(default_factory=StudentSection)
    eval: EvalSection = field(default_factory=EvalSection)
    output_dir: str = "runs"


def load_experiment_config(path: str | Path, overrides: list[str] | None = None) -> ExperimentConfig:
    """Parse the YAML file, apply dotted overrides, and build the typed config."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for override in overrides or []:
        apply_override(raw, override)
    return parse_experiment_config(raw)


def parse_experiment_config(raw: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, raw, "")


def apply_override(raw: dict, override: str) -> None:
    """Set a single dotted-path leaf, e.g. ``student.train.distill.alpha=0.95``."""
    if "=" not in override:
        raise ConfigError(f"override {override!r} must look like dotted.path=value")
    dotted, _, text = override.partition("=")
    keys = [k for k in dotted.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {override!r} has an empty path")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError:
        value = text
    node = raw
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"override {dotted!r}: {key!r} is not a mapping")
        node = child
    node[keys[-1]] = value


def config_hash(config, *sections: str) -> str:
    """Short content hash of the resolved config (optionally only some sections)."""
    data = dataclasses.asdict(config)
    if sections:
        data = {name: data[name] for name in sections}
    canonical = json.dumps(data, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:10]


def config_to_yaml(config) -> str:
    return yaml.safe_dump(_plain(dataclasses.asdict(config)), sort_keys=False)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


# -- strict dataclass construction ----------------------------------------


def _build(cls, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {sorted(unknown)}; known: {sorted(fields)}")
    kwargs = {}
    for name, f in fields.items():
        child_path = f"{path}.{name}" if path else name
        if name in data:
            kwargs[name] = _convert(hints[f.name], data[name], child_path)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{child_path}: required key missing")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def _convert(hint, value, path: str):
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _convert(args[0], value, path)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        item_type = typing.get_args(hint)[0]
        return tuple(_convert(item_type, v, f"{path}[{i}]") for i, v in enumerate(value))
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value
