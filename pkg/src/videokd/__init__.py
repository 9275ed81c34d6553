"""Teacher-student knowledge distillation for video action classification.

The pipeline: catalog clips in a manifest, sample and preprocess frames,
fine-tune a frozen-backbone teacher, distill a small per-frame student with
the temperature-softened blended loss, and score everything with the
frame-majority video-level top-1 rule.
"""

from .batching import Batch, make_batches
from .checkpoint import LoadedCheckpoint, TrainState, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_experiment_config
from .errors import (
    CheckpointError,
    ConfigError,
    FrameReadError,
    ManifestError,
    ModelBuildError,
    TrainingDiverged,
)
from .evaluation import (
    EvalReport,
    FramePrediction,
    VideoVerdict,
    evaluate_model,
    export_curves,
    topk_frame_accuracy,
    video_level_accuracy,
)
from .history import EpochRecord, RunHistory, read_history_csv, write_history_csv
from .losses import DistillParams, cross_entropy, distillation_loss, kl_divergence, softmax
from .manifest import (
    ClassVocabulary,
    ClipManifest,
    ClipRecord,
    load_manifest,
    save_manifest,
    stratified_split,
)
from .models import (
    AdapterSpec,
    BackboneSpec,
    FrontNetSpec,
    ModelHandle,
    StudentSpec,
    aggregate_clip_logits,
    build_backbone,
    build_jointnet,
    build_student,
    count_parameters,
    extract_backbone,
    map_classes,
    register_pretrained_backbone,
)
from .sampling import FrameSequence, SamplingConfig, preprocess_clip, sample_uniform, uniform_frame_indices
from .sweep import SweepPlan, SweepResult, run_sweep, write_sweep_report
from .synthetic import make_synthetic_fixture
from .training import (
    StudentTrainConfig,
    TeacherTrainConfig,
    TrainResult,
    cosine_annealing_lr,
    distill_student,
    train_teacher,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterSpec",
    "BackboneSpec",
    "Batch",
    "CheckpointError",
    "ClassVocabulary",
    "ClipManifest",
    "ClipRecord",
    "ConfigError",
    "DistillParams",
    "EpochRecord",
    "EvalReport",
    "ExperimentConfig",
    "FramePrediction",
    "FrameReadError",
    "FrameSequence",
    "FrontNetSpec",
    "LoadedCheckpoint",
    "ManifestError",
    "ModelBuildError",
    "ModelHandle",
    "RunHistory",
    "SamplingConfig",
    "StudentSpec",
    "StudentTrainConfig",
    "SweepPlan",
    "SweepResult",
    "TeacherTrainConfig",
    "TrainResult",
    "TrainState",
    "TrainingDiverged",
    "VideoVerdict",
    "aggregate_clip_logits",
    "build_backbone",
    "build_jointnet",
    "build_student",
    "cosine_annealing_lr",
    "count_parameters",
    "cross_entropy",
    "distill_student",
    "distillation_loss",
    "evaluate_model",
    "export_curves",
    "extract_backbone",
    "kl_divergence",
    "load_checkpoint",
    "load_experiment_config",
    "load_manifest",
    "make_batches",
    "make_synthetic_fixture",
    "map_classes",
    "preprocess_clip",
    "read_history_csv",
    "register_pretrained_backbone",
    "run_sweep",
    "sample_uniform",
    "save_checkpoint",
    "save_manifest",
    "softmax",
    "stratified_split",
    "topk_frame_accuracy",
    "train_teacher",
    "uniform_frame_indices",
    "video_level_accuracy",
    "write_history_csv",
    "write_sweep_report",
]
