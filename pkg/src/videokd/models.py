"""Model zoo: clip-level teacher composition and per-frame students.

The teacher is a composition of three stages — a (usually frozen) clip
encoder backbone emitting a fixed-width feature vector, a learnable fully
connected adapter of the same width, and a classification head whose last
hidden layer is 128 wide. Students are plain 2D per-frame classifiers; their
clip-level prediction is the mean of per-frame logits.

All models are torch modules wrapped in a ModelHandle, which fixes what the
model consumes (whole clips vs. single frames) and how raw numpy frame
batches are converted at the input boundary.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch
from torch import nn

from .batching import Batch
from .errors import ModelBuildError
from .sampling import SamplingConfig, apply_normalization
from .seeding import SALT_INIT, derive_seed

BACKBONE_KINDS = ("pretrained-temporal", "synthetic-tiny")
STUDENT_ARCHITECTURES = ("small-residual-2d", "tiny-conv")
PRETRAINED_OUTPUT_DIM = 400

# Fast-adapting EMA for normalization stats: desk-scale runs see one small
# batch per epoch, where the default 0.1 momentum leaves inference-mode stats
# miscalibrated for tens of epochs.
BN_MOMENTUM = 0.5


@dataclass(frozen=True)
class BackboneSpec:
    kind: str
    identifier: str = "tiny"
    output_dim: int = PRETRAINED_OUTPUT_DIM
    frozen: bool = True

    def __post_init__(self):
        if self.kind not in BACKBONE_KINDS:
            raise ModelBuildError(f"backbone kind must be one of {BACKBONE_KINDS}, got {self.kind!r}")
        if self.output_dim < 1:
            raise ModelBuildError(f"output_dim must be positive, got {self.output_dim}")
        if self.kind == "pretrained-temporal" and self.output_dim != PRETRAINED_OUTPUT_DIM:
            raise ModelBuildError(
                f"pretrained-temporal backbones emit {PRETRAINED_OUTPUT_DIM} features, got output_dim={self.output_dim}"
            )


@dataclass(frozen=True)
class AdapterSpec:
    """Fully connected stack whose first and last widths equal the backbone output."""

    layer_widths: tuple[int, ...] = (PRETRAINED_OUTPUT_DIM, PRETRAINED_OUTPUT_DIM)
    use_batch_normalization: bool = True

    def __post_init__(self):
        widths = tuple(self.layer_widths)
        if len(widths) < 2:
            raise ModelBuildError(f"adapter needs at least [in, out] widths, got {list(widths)}")
        if any(w < 1 for w in widths):
            raise ModelBuildError(f"adapter widths must be positive, got {list(widths)}")
        if widths[0] != widths[-1]:
            raise ModelBuildError(f"adapter must preserve the feature width, got {widths[0]} -> {widths[-1]}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def width(self) -> int:
        return self.layer_widths[0]


@dataclass(frozen=True)
class FrontNetSpec:
    """Classification head; the final trainable map is 128 x num_classes."""

    num_classes: int
    hidden_widths: tuple[int, ...] = (256, 128)

    def __post_init__(self):
        widths = tuple(self.hidden_widths)
        if not widths:
            raise ModelBuildError("frontnet hidden_widths must be non-empty")
        if any(w < 1 for w in widths):
            raise ModelBuildError(f"frontnet widths must be positive, got {list(widths)}")
        if widths[-1] != 128:
            raise ModelBuildError(f"frontnet hidden_widths must end in 128, got {list(widths)}")
        if self.num_classes < 1:
            raise ModelBuildError(f"num_classes must be positive, got {self.num_classes}")
        object.__setattr__(self, "hidden_widths", widths)


@dataclass(frozen=True)
class StudentSpec:
    architecture: str
    num_classes: int
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.architecture not in STUDENT_ARCHITECTURES:
            raise ModelBuildError(f"unknown student architecture {self.architecture!r}; known: {STUDENT_ARCHITECTURES}")
        if self.num_classes < 1:
            raise ModelBuildError(f"num_classes must be positive, got {self.num_classes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ModelBuildError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class ModelHandle:
    """A torch module plus the input convention it expects.

    consumes="clip": forward takes (B, T, 3, H, W) and returns (B, M).
    consumes="frame": forward takes (N, 3, H, W) and returns (N, M); clip
    logits are the per-clip mean of frame logits.
    """

    module: nn.Module
    num_classes: int
    consumes: str
    build_info: dict = field(default_factory=dict)
    fully_frozen: bool = False

    @property
    def parameters(self) -> dict[str, torch.Tensor]:
        return dict(self.module.named_parameters())

    @property
    def trainable_mask(self) -> dict[str, bool]:
        return {name: p.requires_grad for name, p in self.module.named_parameters()}

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.module(x)

    __call__ = forward

    def train_mode(self) -> "ModelHandle":
        if not self.fully_frozen:
            self.module.train()
        return self

    def eval_mode(self) -> "ModelHandle":
        self.module.eval()
        return self

    def clip_logits(self, batch: Batch, config: SamplingConfig | None = None) -> torch.Tensor:
        """(B, M) logits for a batch of clips."""
        if self.consumes == "clip":
            x = _to_tensor(batch.stacked_frames(), config)  # (B, T, 3, H, W)
            return self.module(x)
        flat, counts = self.frame_logits(batch, config)
        return aggregate_by_clip(flat, counts)

    def frame_logits(self, batch: Batch, config: SamplingConfig | None = None) -> tuple[torch.Tensor, list[int]]:
        """Per-frame logits (sum T_i, M) plus the per-clip frame counts.

        Clip-level models contribute one pseudo-frame per clip: their single
        clip prediction stands for the whole clip.
        """
        if self.consumes == "frame":
            x = _to_tensor(batch.flat_frames(), config)  # (N, 3, H, W)
            return self.module(x), batch.frame_counts
        return self.clip_logits(batch, config), [1] * len(batch)

    def checksum(self, trainable_only: bool = False, frozen_only: bool = False, include_buffers: bool = False) -> str:
        """sha256 over the selected parameters (name-sorted raw bytes)."""
        digest = hashlib.sha256()
        tensors = dict(self.module.named_parameters())
        if include_buffers:
            tensors.update(dict(self.module.named_buffers()))
        for name in sorted(tensors):
            t = tensors[name]
            if trainable_only and not getattr(t, "requires_grad", False):
                continue
            if frozen_only and getattr(t, "requires_grad", False):
                continue
            digest.update(name.encode())
            digest.update(t.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()


def _to_tensor(frames: np.ndarray, config: SamplingConfig | None) -> torch.Tensor:
    if config is not None:
        frames = apply_normalization(frames, config)
    x = torch.from_numpy(np.ascontiguousarray(frames, dtype=np.float32))
    # channels-last numpy -> channels-first torch
    return x.movedim(-1, -3).contiguous()


def aggregate_clip_logits(per_frame_logits, method: str = "mean") -> torch.Tensor:
    """Collapse (T, M) per-frame logits to a single (1, M) clip prediction."""
    if method != "mean":
        raise ValueError(f"unknown aggregation method {method!r}")
    logits = per_frame_logits if isinstance(per_frame_logits, torch.Tensor) else torch.as_tensor(per_frame_logits)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ValueError(f"per_frame_logits must be a non-empty (T, M) matrix, got shape {tuple(logits.shape)}")
    return logits.mean(dim=0, keepdim=True)


def aggregate_by_clip(flat_logits: torch.Tensor, frame_counts: list[int]) -> torch.Tensor:
    """Mean-aggregate (sum T_i, M) frame logits into (B, M) clip logits."""
    chunks = torch.split(flat_logits, list(frame_counts), dim=0)
    return torch.stack([c.mean(dim=0) for c in chunks])


# --------------------------------------------------------------------------
# backbones
# --------------------------------------------------------------------------

PretrainedLoader = Callable[[BackboneSpec], nn.Module]
_PRETRAINED_LOADERS: dict[str, PretrainedLoader] = {}


def register_pretrained_backbone(identifier: str, loader: PretrainedLoader) -> None:
    """Register a loader that materializes a pretrained clip encoder.

    The loader must return a module mapping (B, T, 3, H, W) to (B, 400).
    """
    _PRETRAINED_LOADERS[identifier] = loader


class TinyClipEncoder(nn.Module):
    """Small seeded conv stack: per-frame features, mean-pooled over time."""

    def __init__(self, output_dim: int):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, kernel_size=3, stride=2, padding=1),
            nn.BatchNorm2d(8, momentum=BN_MOMENTUM),
            nn.ReLU(inplace=True),
            nn.Conv2d(8, 16, kernel_size=3, stride=2, padding=1),
            nn.BatchNorm2d(16, momentum=BN_MOMENTUM),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )
        self.proj = nn.Linear(16, output_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (B, T, 3, H, W) -> (B, output_dim)"""
        b, t = x.shape[:2]
        feats = self.features(x.flatten(0, 1)).flatten(1)  # (B*T, 16)
        feats = self.proj(feats).reshape(b, t, -1)
        return feats.mean(dim=1)


class _TimeToChannelAdapter(nn.Module):
    """Wraps a (B, C, T, H, W) video network to accept (B, T, C, H, W)."""

    def __init__(self, net: nn.Module):
        super().__init__()
        self.net = net

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x.permute(0, 2, 1, 3, 4))


def _load_torchvision_video(spec: BackboneSpec) -> nn.Module:
    name = spec.identifier.split(":", 1)[1]
    try:
        import torchvision.models.video as video_models

        factory = getattr(video_models, name)
        net = factory(weights="DEFAULT")
    except AttributeError:
        raise ModelBuildError(f"unknown torchvision video model {name!r}") from None
    except Exception as exc:
        raise ModelBuildError(f"could not load pretrained weights for {spec.identifier!r}: {exc}") from exc
    return _TimeToChannelAdapter(net)


def build_backbone(spec: BackboneSpec, seed: int | None = None) -> ModelHandle:
    """Materialize a clip encoder emitting (B, output_dim) features.

    synthetic-tiny is the seeded in-repo test double; pretrained-temporal
    resolves through register_pretrained_backbone (identifiers of the form
    "torchvision-video:<name>" fall back to torchvision's video zoo).
    """
    if seed is not None:
        torch.manual_seed(derive_seed(seed, SALT_INIT))
    if spec.kind == "synthetic-tiny":
        module: nn.Module = TinyClipEncoder(spec.output_dim)
    else:
        loader = _PRETRAINED_LOADERS.get(spec.identifier)
        if loader is not None:
            module = loader(spec)
        elif spec.identifier.startswith("torchvision-video:"):
            module = _load_torchvision_video(spec)
        else:
            raise ModelBuildError(
                f"no loader registered for pretrained backbone {spec.identifier!r}; "
                "call register_pretrained_backbone first"
            )
    if spec.frozen:
        for p in module.parameters():
            p.requires_grad_(False)
        module.eval()
    return ModelHandle(
        module=module,
        num_classes=spec.output_dim,
        consumes="clip",
        build_info={"kind": "backbone", "backbone": asdict(spec)},
        fully_frozen=spec.frozen,
    )


# --------------------------------------------------------------------------
# teacher composition
# --------------------------------------------------------------------------


def _linear_stack(widths: tuple[int, ...], batch_norm: bool) -> nn.Sequential:
    layers: list[nn.Module] = []
    for w_in, w_out in zip(widths, widths[1:]):
        layers.append(nn.Linear(w_in, w_out))
        if batch_norm:
            layers.append(nn.BatchNorm1d(w_out, momentum=BN_MOMENTUM))
        layers.append(nn.ReLU(inplace=True))
    return nn.Sequential(*layers)


class FrontNet(nn.Module):
    """Feature-to-class head ending in a 128 x num_classes linear map."""

    def __init__(self, input_dim: int, spec: FrontNetSpec):
        super().__init__()
        self.hidden = _linear_stack((input_dim, *spec.hidden_widths), batch_norm=True)
        self.classify = nn.Linear(spec.hidden_widths[-1], spec.num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classify(self.hidden(x))


class JointNet(nn.Module):
    """backbone -> adapter -> head; the backbone may be permanently frozen."""

    def __init__(self, backbone: nn.Module, adapter: nn.Module, frontnet: nn.Module, backbone_frozen: bool):
        super().__init__()
        self.backbone = backbone
        self.adapter = adapter
        self.frontnet = frontnet
        self.backbone_frozen = backbone_frozen

    def train(self, mode: bool = True) -> "JointNet":
        super().train(mode)
        if self.backbone_frozen:
            self.backbone.eval()
        return self

    def forward_stages(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        features = self.backbone(x)
        adapted = self.adapter(features)
        return features, adapted, self.frontnet(adapted)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward_stages(x)[2]


def build_jointnet(
    backbone: ModelHandle,
    adapter: AdapterSpec,
    frontnet: FrontNetSpec,
    seed: int | None = None,
) -> ModelHandle:
    """Compose the teacher; only adapter and head parameters are trainable."""
    backbone_dim = backbone.num_classes
    if adapter.width != backbone_dim:
        raise ModelBuildError(
            f"dimension mismatch at backbone->adapter: backbone emits {backbone_dim}, adapter expects {adapter.width}"
        )
    if any(backbone.trainable_mask.values()):
        raise ModelBuildError("jointnet requires a frozen backbone; build it with frozen=True")
    if seed is not None:
        torch.manual_seed(derive_seed(seed, SALT_INIT, 1))
    module = JointNet(
        backbone=backbone.module,
        adapter=_linear_stack(adapter.layer_widths, adapter.use_batch_normalization),
        frontnet=FrontNet(adapter.layer_widths[-1], frontnet),
        backbone_frozen=backbone.fully_frozen or not any(backbone.trainable_mask.values()),
    )
    return ModelHandle(
        module=module,
        num_classes=frontnet.num_classes,
        consumes="clip",
        build_info={
            "kind": "jointnet",
            "backbone": backbone.build_info.get("backbone", {}),
            "adapter": asdict(adapter),
            "frontnet": asdict(frontnet),
        },
    )


# --------------------------------------------------------------------------
# students
# --------------------------------------------------------------------------


class TinyConvClassifier(nn.Module):
    """Minimal per-frame classifier for desk-scale runs."""

    def __init__(self, num_classes: int, dropout_rate: float):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, kernel_size=3, stride=2, padding=1),
            nn.BatchNorm2d(8, momentum=BN_MOMENTUM),
            nn.ReLU(inplace=True),
            nn.Conv2d(8, 16, kernel_size=3, stride=2, padding=1),
            nn.BatchNorm2d(16, momentum=BN_MOMENTUM),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
        )
        self.dropout = nn.Dropout(dropout_rate)
        self.fc = nn.Linear(16, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (N, 3, H, W) -> (N, num_classes)"""
        return self.fc(self.dropout(self.features(x).flatten(1)))


def build_student(spec: StudentSpec, seed: int | None = None) -> ModelHandle:
    """Per-frame 2D classifier; all parameters trainable."""
    if seed is not None:
        torch.manual_seed(derive_seed(seed, SALT_INIT, 2))
    if spec.architecture == "tiny-conv":
        module: nn.Module = TinyConvClassifier(spec.num_classes, spec.dropout_rate)
    else:
        from torchvision.models import resnet18

        module = resnet18(num_classes=spec.num_classes)
        if spec.dropout_rate > 0.0:
            module.fc = nn.Sequential(nn.Dropout(spec.dropout_rate), module.fc)
    return ModelHandle(
        module=module,
        num_classes=spec.num_classes,
        consumes="frame",
        build_info={"kind": "student", "student": asdict(spec)},
    )


# --------------------------------------------------------------------------
# utilities
# --------------------------------------------------------------------------


def count_parameters(model: ModelHandle | nn.Module, trainable_only: bool = False) -> int:
    """Exact count of scalar parameters."""
    module = model.module if isinstance(model, ModelHandle) else model
    return sum(p.numel() for p in module.parameters() if p.requires_grad or not trainable_only)


def extract_backbone(jointnet: ModelHandle) -> ModelHandle:
    """The raw feature stage of a composed teacher, as a standalone clip model."""
    if not isinstance(jointnet.module, JointNet):
        raise ModelBuildError("extract_backbone expects a composed teacher handle")
    spec = jointnet.build_info.get("backbone", {})
    return ModelHandle(
        module=jointnet.module.backbone,
        num_classes=int(spec.get("output_dim", PRETRAINED_OUTPUT_DIM)),
        consumes="clip",
        build_info={"kind": "backbone", "backbone": spec},
        fully_frozen=True,
    )


class _ClassSlice(nn.Module):
    def __init__(self, net: nn.Module, indices: list[int]):
        super().__init__()
        self.net = net
        self.register_buffer("indices", torch.as_tensor(indices, dtype=torch.long))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x).index_select(-1, self.indices)


def map_classes(handle: ModelHandle, class_indices: list[int]) -> ModelHandle:
    """Restrict a wide classifier to a subset of its output classes.

    The naive zero-shot mapping for evaluating an M'-way model on M-class
    data: logit column class_indices[i] stands for local class i.
    """
    if any(not 0 <= i < handle.num_classes for i in class_indices):
        raise ModelBuildError(f"class indices must lie in [0, {handle.num_classes})")
    return ModelHandle(
        module=_ClassSlice(handle.module, list(class_indices)),
        num_classes=len(class_indices),
        consumes=handle.consumes,
        build_info={"kind": "class-slice", "inner": handle.build_info, "indices": list(class_indices)},
        fully_frozen=handle.fully_frozen,
    )
