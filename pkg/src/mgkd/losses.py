"""Training losses for the teacher/student objective.

Every loss returns a LossValue carrying the scalar plus its gradient w.r.t.
the student logits and (where relevant) the student representation, so the
trainer composes terms linearly and feeds both channels to backprop. The
teacher/snapshot side of every distillation term is treated as a constant.

Temperature acts on logits: both sides of a softened KL term are
sigmoid(z / tau), and the softened losses carry the conventional tau^2
scale so their gradient magnitude stays comparable across temperatures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, StateError
from .numcore import sigmoid

PROB_CLAMP = 1e-7


@dataclass
class LossValue:
    value: float
    grad_logit: np.ndarray | None = None  # (n,); None means zero
    grad_repr: np.ndarray | None = None   # (n, d); None means zero


@dataclass
class ClassPriors:
    """Training-split class proportions, pi0 + pi1 = 1."""

    pi0: float
    pi1: float

    def __post_init__(self):
        if not (self.pi0 > 0.0 and self.pi1 > 0.0):
            raise ConfigError("class priors must be strictly positive")
        if abs(self.pi0 + self.pi1 - 1.0) > 1e-12:
            raise ConfigError("class priors must sum to 1")

    @classmethod
    def from_labels(cls, y) -> "ClassPriors":
        y = np.asarray(y)
        pi1 = float(np.mean(y == 1))
        return cls(1.0 - pi1, pi1)


def _check_lengths(*vecs):
    n = len(vecs[0])
    for v in vecs[1:]:
        if len(v) != n:
            raise DimensionError(
                f"length mismatch: {len(v)} != {n}")
    return n


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def kl_hard(y, p, weights=None) -> LossValue:
    """Weighted cross-entropy (binary KL against one-hot targets)."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = _check_lengths(y, p)
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        _check_lengths(y, w)
    pc = _clamp(p)
    ce = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    value = float(np.mean(w * ce))
    grad_logit = w * (pc - y) / n
    return LossValue(value, grad_logit, None)


def kl_soft(teacher_logits, student_logits, tau: float) -> LossValue:
    """Temperature-softened two-class KL from teacher to student.

    Gradient flows to the student logits only; the teacher side is a
    constant.
    """
    if tau < 1.0:
        raise ConfigError(f"temperature must be >= 1, got {tau}")
    zt = np.asarray(teacher_logits, dtype=np.float64)
    zs = np.asarray(student_logits, dtype=np.float64)
    n = _check_lengths(zt, zs)
    qt = _clamp(sigmoid(zt / tau))
    qs = _clamp(sigmoid(zs / tau))
    kl = qt * np.log(qt / qs) + (1.0 - qt) * np.log((1.0 - qt) / (1.0 - qs))
    value = float(tau * tau * np.mean(kl))
    grad_logit = tau * (qs - qt) / n
    return LossValue(value, grad_logit, None)


def label_loss(y, p, teacher_logits, student_logits, tau: float,
               alpha: float, weights=None,
               hard_part: LossValue | None = None) -> LossValue:
    """(1 - alpha) * hard + alpha * soft, gradients combined linearly.

    `hard_part` substitutes a precomputed hard-term LossValue (re-weighted
    or focal variants); by default the hard term is plain kl_hard.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0,1], got {alpha}")
    hard = hard_part if hard_part is not None else kl_hard(y, p, weights)
    if alpha == 0.0:
        return hard
    soft = kl_soft(teacher_logits, student_logits, tau)
    if alpha == 1.0:
        return soft
    return LossValue(
        (1.0 - alpha) * hard.value + alpha * soft.value,
        (1.0 - alpha) * hard.grad_logit + alpha * soft.grad_logit,
        None,
    )


def feat_loss(h_teacher, h_student, metric: str = "mse") -> LossValue:
    """Representation alignment loss; gradient w.r.t. the student rows."""
    ht = np.asarray(h_teacher, dtype=np.float64)
    hs = np.asarray(h_student, dtype=np.float64)
    if ht.shape != hs.shape:
        raise DimensionError(
            f"representation shapes differ: {ht.shape} vs {hs.shape}")
    n, d = hs.shape
    if metric == "mse":
        diff = hs - ht
        value = float(np.mean(diff * diff))
        grad_repr = 2.0 * diff / (n * d)
        return LossValue(value, None, grad_repr)
    if metric == "cosine":
        nt = np.linalg.norm(ht, axis=1)
        ns = np.linalg.norm(hs, axis=1)
        for name, norms in (("teacher", nt), ("student", ns)):
            bad = np.flatnonzero(norms == 0.0)
            if bad.size:
                raise NumericError(
                    f"cosine distance undefined: zero-norm {name} row "
                    f"{int(bad[0])}")
        dot = np.sum(ht * hs, axis=1)
        cos = dot / (nt * ns)
        value = float(np.mean(1.0 - cos))
        grad_repr = -(ht / (nt * ns)[:, None]
                      - (cos / (ns * ns))[:, None] * hs) / n
        return LossValue(value, None, grad_repr)
    raise ConfigError(f"unknown feature metric {metric!r}")


def self_loss(student_logits, snapshot_logits, tau: float) -> LossValue:
    """Softened KL from the previous-epoch snapshot to current predictions.

    The snapshot is stored as logits so the temperature is re-applied on
    both sides; it carries no gradient.
    """
    if snapshot_logits is None:
        raise StateError("self-distillation requires a snapshot from a "
                         "previous epoch")
    return kl_soft(snapshot_logits, student_logits, tau)


def distill_total(label: LossValue, feat: LossValue | None,
                  self_part: LossValue | None,
                  beta: float, lam: float) -> LossValue:
    """label + beta * feat + lam * self, gradients summed channel-wise."""
    if beta < 0.0 or lam < 0.0:
        raise ConfigError("beta and lambda must be nonnegative")
    value = label.value
    grad_logit = label.grad_logit
    grad_repr = None
    if beta > 0.0 and feat is not None:
        value += beta * feat.value
        grad_repr = beta * feat.grad_repr
    if lam > 0.0 and self_part is not None:
        value += lam * self_part.value
        grad_logit = grad_logit + lam * self_part.grad_logit
    return LossValue(value, grad_logit, grad_repr)


def reweight(y, priors: ClassPriors) -> np.ndarray:
    """Per-sample weights 1/pi_c, inversely proportional to class priors."""
    y = np.asarray(y)
    return np.where(y == 1, 1.0 / priors.pi1, 1.0 / priors.pi0)


def focal_loss(y, p, gamma: float = 2.0, weights=None) -> LossValue:
    """Cross-entropy modulated by (1 - p_t)^gamma; gamma=0 is exactly CE."""
    if gamma < 0.0:
        raise ConfigError(f"gamma must be nonnegative, got {gamma}")
    if gamma == 0.0:
        return kl_hard(y, p, weights)
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = _check_lengths(y, p)
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        _check_lengths(y, w)
    pc = _clamp(p)
    pt = np.where(y == 1, pc, 1.0 - pc)
    mod = (1.0 - pt) ** gamma
    value = float(np.mean(w * mod * (-np.log(pt))))
    dl_dpt = w * (-gamma * (1.0 - pt) ** (gamma - 1.0) * (-np.log(pt))
                  - mod / pt)
    sign = np.where(y == 1, 1.0, -1.0)
    grad_logit = dl_dpt * sign * pc * (1.0 - pc) / n
    return LossValue(value, grad_logit, None)
