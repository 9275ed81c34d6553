"""Exception types shared across the package.

The CLI maps these onto stable exit codes: usage/config/artifact problems
exit 2, numerical failures exit 3, plain I/O failures exit 1.
"""


class ManifestError(ValueError):
    """Raised when a clip manifest file is missing, malformed, or violates an invariant."""


class FrameReadError(RuntimeError):
    """Raised when a clip's frames cannot be decoded; carries clip_id and frame index."""

    def __init__(self, clip_id: str, frame_index: int, detail: str):
        super().__init__(f"clip {clip_id!r}, frame {frame_index}: {detail}")
        self.clip_id = clip_id
        self.frame_index = frame_index


class ModelBuildError(ValueError):
    """Raised for unknown architectures, unresolvable weights, or dimension mismatches."""


class CheckpointError(RuntimeError):
    """Raised when a checkpoint archive is missing, truncated, or inconsistent with its specs."""


class TrainingDiverged(RuntimeError):
    """Raised when a training step produces a non-finite loss or parameters."""

    def __init__(self, epoch: int, step: int, value: float, what: str = "loss"):
        super().__init__(f"non-finite {what} {value!r} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step
        self.value = value


class NonFiniteModelOutput(ValueError):
    """Raised when a model emits non-finite logits during evaluation."""


class ConfigError(ValueError):
    """Raised when an experiment config file fails to parse into the typed configs."""
