"""Classification and distillation losses as pure, differentiable functions.

All three losses reduce by the batch mean, so their scale is batch-size
invariant. Gradients flow into student logits only: the teacher side of the
soft loss is detached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

KL_REFERENCES = ("teacher", "student")


@dataclass(frozen=True)
class DistillParams:
    """Knobs of the blended distillation loss.

    alpha weighs the hard-label term against the softened teacher-matching
    term; tau is the softmax temperature of the soft term. The KL reference
    distribution and the tau**2 gradient-scale compensation are exposed
    because both conventions appear in practice.
    """

    alpha: float = 0.90
    tau: float = 6.0
    kl_reference: str = "teacher"
    scale_by_tau_squared: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.tau > 0.0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.kl_reference not in KL_REFERENCES:
            raise ValueError(f"kl_reference must be one of {KL_REFERENCES}, got {self.kl_reference!r}")


@dataclass
class DistillLossResult:
    """Blended loss plus its components, for optimization and logging."""

    total: torch.Tensor
    cross_entropy: torch.Tensor
    kl_divergence: torch.Tensor


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x))


def softmax(logits, tau: float = 1.0) -> torch.Tensor:
    """Temperature-scaled softmax with max-subtraction, row-wise on 2-D input."""
    if tau <= 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    z = _as_tensor(logits)
    if not torch.isfinite(z).all():
        raise ValueError("softmax requires finite logits")
    z = z / tau
    z = z - z.max(dim=-1, keepdim=True).values
    e = torch.exp(z)
    return e / e.sum(dim=-1, keepdim=True)


def log_softmax(logits, tau: float = 1.0) -> torch.Tensor:
    z = _as_tensor(logits) / tau
    return z - torch.logsumexp(z, dim=-1, keepdim=True)


def cross_entropy(logits, targets) -> torch.Tensor:
    """Mean over the batch of -log softmax(logits)[target], at temperature 1."""
    z = _as_tensor(logits)
    t = _as_tensor(targets).long()
    if z.ndim != 2:
        raise ValueError(f"logits must be (B, M), got shape {tuple(z.shape)}")
    if t.shape != (z.shape[0],):
        raise ValueError(f"targets must be ({z.shape[0]},), got shape {tuple(t.shape)}")
    if t.numel() and (t.min() < 0 or t.max() >= z.shape[1]):
        raise ValueError(f"target indices must lie in [0, {z.shape[1]})")
    log_probs = log_softmax(z, tau=1.0)
    return -log_probs.gather(1, t.unsqueeze(1)).mean()


def kl_divergence(
    student_logits,
    teacher_logits,
    tau: float,
    reference: str = "teacher",
    scale_by_tau_squared: bool = True,
) -> torch.Tensor:
    """Batch-mean KL between the softened teacher and student distributions.

    With reference="teacher" (the default) this is sum_c t_c * log(t_c / s_c),
    which pulls the student toward the teacher; "student" swaps the roles.
    The teacher side is detached, so no gradient ever reaches it. The optional
    tau**2 factor keeps soft-term gradient magnitudes comparable across tau.
    """
    if reference not in KL_REFERENCES:
        raise ValueError(f"reference must be one of {KL_REFERENCES}, got {reference!r}")
    s = _as_tensor(student_logits)
    t = _as_tensor(teacher_logits).detach()
    if s.shape != t.shape or s.ndim != 2:
        raise ValueError(f"student/teacher logits must share a (B, M) shape, got {tuple(s.shape)} vs {tuple(t.shape)}")

    log_s = log_softmax(s, tau=tau)
    log_t = log_softmax(t, tau=tau)
    if reference == "teacher":
        # exp(log_t) underflows to exactly 0 for hopeless classes; 0 * finite = 0.
        per_sample = (torch.exp(log_t) * (log_t - log_s)).sum(dim=-1)
    else:
        per_sample = (torch.exp(log_s) * (log_s - log_t)).sum(dim=-1)
    value = per_sample.mean()
    if scale_by_tau_squared:
        value = value * (tau * tau)
    return value


def distillation_loss(
    student_logits,
    teacher_logits,
    targets,
    params: DistillParams,
) -> DistillLossResult:
    """alpha-blend of the hard cross-entropy and the softened KL term.

    total = alpha * CE(student, targets) + (1 - alpha) * KL(student, teacher, tau).
    The hard term always runs at temperature 1; only the student side carries
    gradient.
    """
    ce = cross_entropy(student_logits, targets)
    kl = kl_divergence(
        student_logits,
        teacher_logits,
        tau=params.tau,
        reference=params.kl_reference,
        scale_by_tau_squared=params.scale_by_tau_squared,
    )
    total = params.alpha * ce + (1.0 - params.alpha) * kl
    return DistillLossResult(total=total, cross_entropy=ce, kl_divergence=kl)
