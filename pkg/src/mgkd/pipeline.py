"""Training orchestration: teacher, distilled student, ablation modes.

The teacher is fitted on in-service features with the hard loss only. The
student is fitted on pre-service features under the combined objective:
hard/soft label terms, representation alignment against the frozen
teacher, and a self-term against the student's own previous-epoch logits
(inactive during epoch 1). Early stopping watches the hard loss on the
validation split.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import losses, metrics, numcore
from .data import TwoPhaseDataset
from .errors import ConfigError, DataError, TrainingError

MODES = ("full", "no_coarse", "no_fine", "no_self",
         "pretrain_only", "baseline_pre", "oracle")
ABLATION_MODES = ("baseline_pre", "pretrain_only", "no_fine", "no_coarse",
                  "full", "oracle")
HARD_TERMS = ("ce", "reweighted", "focal", "reweighted_focal")


@dataclass
class DistillConfig:
    """All training/distillation hyperparameters with published defaults."""

    alpha: float = 0.2
    beta: float = 0.25
    lam: float = 0.1
    tau: float = 2.5
    feat_metric: str = "mse"
    hard_term: str = "ce"
    gamma: float = 2.0
    lr: float = 0.005
    weight_decay: float = 1e-7
    dropout: float = 0.4
    hidden_dims: tuple[int, ...] = (256, 256)
    batch_size: int = 100_000
    max_epochs: int = 100
    patience: int = 50
    seed: int = 0
    mode: str = "full"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0,1], got {self.alpha}")
        if self.beta < 0.0 or self.lam < 0.0:
            raise ConfigError("beta and lambda must be nonnegative")
        if self.tau < 1.0:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if self.feat_metric not in ("mse", "cosine"):
            raise ConfigError(f"unknown feat_metric {self.feat_metric!r}")
        if self.hard_term not in HARD_TERMS:
            raise ConfigError(f"unknown hard_term {self.hard_term!r}")
        if self.gamma < 0.0:
            raise ConfigError("gamma must be nonnegative")
        if self.lr <= 0.0:
            raise ConfigError("learning rate must be positive")
        if self.weight_decay < 0.0:
            raise ConfigError("weight decay must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0,1)")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 0:
            raise ConfigError("batch_size/max_epochs/patience out of range")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        self.hidden_dims = tuple(int(d) for d in self.hidden_dims)

    def normalized(self) -> "DistillConfig":
        """Apply the loss-term constraints implied by the ablation mode."""
        cfg = self
        if cfg.mode == "no_coarse":
            cfg = replace(cfg, beta=0.0)
        elif cfg.mode == "no_fine":
            cfg = replace(cfg, alpha=0.0)
        elif cfg.mode == "no_self":
            cfg = replace(cfg, lam=0.0)
        elif cfg.mode in ("baseline_pre", "pretrain_only", "oracle"):
            cfg = replace(cfg, alpha=0.0, beta=0.0, lam=0.0)
        return cfg


@dataclass
class TrainTrace:
    """Per-epoch loss components and validation metrics for one run."""

    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""


def _hard_loss(cfg: DistillConfig, y, p, weights):
    if cfg.hard_term in ("focal", "reweighted_focal"):
        return losses.focal_loss(y, p, cfg.gamma, weights)
    return losses.kl_hard(y, p, weights)


def _hard_weights(cfg: DistillConfig, y, priors):
    if cfg.hard_term in ("reweighted", "reweighted_focal"):
        return losses.reweight(y, priors)
    return None


def _train_model(x_tr, y_tr, x_va, y_va, cfg: DistillConfig, *,
                 teacher: numcore.MlpModel | None = None,
                 teacher_x=None,
                 init_from: numcore.MlpModel | None = None,
                 ) -> tuple[numcore.MlpModel, TrainTrace]:
    """Core loop shared by teacher, student, and baseline training."""
    n_tr = x_tr.shape[0]
    rng = np.random.default_rng(cfg.seed)
    if init_from is not None:
        model = init_from
    else:
        model = numcore.init_mlp(x_tr.shape[1], list(cfg.hidden_dims),
                                 cfg.dropout, rng)
    if cfg.beta > 0.0 and teacher is not None \
            and teacher.repr_dim != model.repr_dim:
        raise ConfigError(
            f"representation widths differ: teacher {teacher.repr_dim}, "
            f"student {model.repr_dim}")

    state = numcore.init_adam(model)
    priors = losses.ClassPriors.from_labels(y_tr)
    w_tr = _hard_weights(cfg, y_tr, priors)
    w_va = _hard_weights(cfg, y_va, priors)

    # Teacher pass once over the full train set, eval mode (frozen, rng-free).
    teacher_h = teacher_z = None
    if teacher is not None and (cfg.alpha > 0.0 or cfg.beta > 0.0):
        t_cache = numcore.forward(teacher, teacher_x, "eval")
        teacher_h, teacher_z = t_cache.h, t_cache.z

    batch_size = min(cfg.batch_size, n_tr)
    snapshot = None
    trace = TrainTrace(stop_reason="max_epochs")
    best_val = np.inf
    best_model = model.copy()

    for epoch in range(cfg.max_epochs):
        new_snapshot = np.empty(n_tr)
        perm = rng.permutation(n_tr)
        sums = {"hard": 0.0, "soft": 0.0, "feat": 0.0, "self": 0.0}
        for start in range(0, n_tr, batch_size):
            idx = perm[start:start + batch_size]
            cache = numcore.forward(model, x_tr[idx], "train", rng)
            y_b = y_tr[idx]
            w_b = None if w_tr is None else w_tr[idx]

            hard = _hard_loss(cfg, y_b, cache.p, w_b)
            soft = feat = self_part = None
            if cfg.alpha > 0.0:
                soft = losses.kl_soft(teacher_z[idx], cache.z, cfg.tau)
                label = losses.LossValue(
                    (1.0 - cfg.alpha) * hard.value + cfg.alpha * soft.value,
                    (1.0 - cfg.alpha) * hard.grad_logit
                    + cfg.alpha * soft.grad_logit)
            else:
                label = hard
            if cfg.beta > 0.0:
                feat = losses.feat_loss(teacher_h[idx], cache.h,
                                        cfg.feat_metric)
            if cfg.lam > 0.0 and snapshot is not None:
                self_part = losses.self_loss(cache.z, snapshot[idx], cfg.tau)
            total = losses.distill_total(label, feat, self_part,
                                         cfg.beta, cfg.lam)
            if not np.isfinite(total.value):
                raise TrainingError(f"non-finite loss at epoch {epoch}")

            grad_repr = total.grad_repr
            if grad_repr is None:
                grad_repr = np.zeros_like(cache.h)
            grads = numcore.backward(model, cache, total.grad_logit,
                                     grad_repr)
            numcore.adam_step(model, grads, state, cfg.lr, cfg.weight_decay)

            nb = len(idx)
            sums["hard"] += hard.value * nb
            sums["soft"] += (soft.value if soft else 0.0) * nb
            sums["feat"] += (feat.value if feat else 0.0) * nb
            sums["self"] += (self_part.value if self_part else 0.0) * nb
            new_snapshot[idx] = cache.z
        snapshot = new_snapshot

        va_cache = numcore.forward(model, x_va, "eval")
        val_loss = _hard_loss(cfg, y_va, va_cache.p, w_va).value
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        report = metrics.evaluate(va_cache.p, y_va, split="valid",
                                  seed=cfg.seed, mode=cfg.mode)
        trace.epochs.append({
            "epoch": epoch,
            "hard": sums["hard"] / n_tr,
            "soft": sums["soft"] / n_tr,
            "feat": sums["feat"] / n_tr,
            "self": sums["self"] / n_tr,
            "val_loss": val_loss,
            "val_auc": report.auc,
            "val_ks": report.ks,
            "val_recall": report.recall_at_k,
        })
        if val_loss < best_val:
            best_val = val_loss
            best_model = model.copy()
            trace.best_epoch = epoch
        if epoch - trace.best_epoch > cfg.patience:
            trace.stop_reason = "early_stop"
            break

    return best_model, trace


def _split_xy(ds: TwoPhaseDataset, features: str):
    if features == "pre":
        x = ds.x_pre
    elif features == "in":
        x = ds.x_in
    elif features == "both":
        x = np.hstack([ds.x_pre, ds.x_in])
    else:
        raise ConfigError(f"unknown feature block {features!r}")
    tr, va = ds.mask("train"), ds.mask("valid")
    return x[tr], ds.y[tr], x[va], ds.y[va], x


def train_teacher(ds: TwoPhaseDataset,
                  cfg: DistillConfig) -> tuple[numcore.MlpModel, TrainTrace]:
    """Fit the in-service model with the hard loss only."""
    if ds.d_in == 0:
        raise DataError("teacher training requires the in-service block")
    cfg = replace(cfg, alpha=0.0, beta=0.0, lam=0.0, mode="full")
    x_tr, y_tr, x_va, y_va, _ = _split_xy(ds, "in")
    return _train_model(x_tr, y_tr, x_va, y_va, cfg)


def train_student(ds: TwoPhaseDataset, teacher: numcore.MlpModel | None,
                  cfg: DistillConfig) -> tuple[numcore.MlpModel, TrainTrace]:
    """Fit the pre-service model under the mode-resolved objective."""
    cfg = cfg.normalized()
    needs_teacher = cfg.mode in ("full", "no_coarse", "no_fine", "no_self",
                                 "pretrain_only")
    if needs_teacher and teacher is None:
        raise ConfigError(f"mode {cfg.mode!r} requires a trained teacher")
    if (needs_teacher or cfg.mode == "oracle") and ds.d_in == 0:
        raise DataError(f"mode {cfg.mode!r} requires the in-service block")

    features = "both" if cfg.mode == "oracle" else "pre"
    x_tr, y_tr, x_va, y_va, _ = _split_xy(ds, features)

    init_from = None
    if cfg.mode == "pretrain_only":
        init_from = teacher.copy()
        if teacher.input_dim != ds.d_pre:
            # Feature widths differ: the first layer cannot be transferred.
            rng = np.random.default_rng(cfg.seed)
            fresh = numcore.init_mlp(ds.d_pre, list(cfg.hidden_dims),
                                     cfg.dropout, rng)
            init_from.encoder[0] = fresh.encoder[0]
        init_from.input_dim = ds.d_pre

    teacher_x = ds.x_in[ds.mask("train")] if needs_teacher else None
    return _train_model(x_tr, y_tr, x_va, y_va, cfg,
                        teacher=teacher if needs_teacher else None,
                        teacher_x=teacher_x, init_from=init_from)


def predict(model: numcore.MlpModel, x) -> np.ndarray:
    """Deterministic eval-mode probabilities."""
    return numcore.forward(model, x, "eval").p


def feature_block_for_mode(mode: str) -> str:
    return "both" if mode == "oracle" else "pre"


def evaluate_split(model: numcore.MlpModel, ds: TwoPhaseDataset, split: str,
                   features: str = "pre", seed: int | None = None,
                   mode: str = "") -> metrics.EvalReport:
    mask = ds.mask(split)
    if features == "both":
        x = np.hstack([ds.x_pre[mask], ds.x_in[mask]])
    elif features == "in":
        x = ds.x_in[mask]
    else:
        x = ds.x_pre[mask]
    return metrics.evaluate(predict(model, x), ds.y[mask], split=split,
                            seed=seed, mode=mode)


def run_ablation(ds: TwoPhaseDataset, base_cfg: DistillConfig,
                 seeds: list[int],
                 modes: tuple[str, ...] = ABLATION_MODES,
                 ) -> list[metrics.EvalReport]:
    """Train every ablation mode on a shared seed set; report test metrics."""
    reports = []
    for seed in seeds:
        cfg_seed = replace(base_cfg, seed=seed)
        teacher = None
        if any(m not in ("baseline_pre", "oracle") for m in modes):
            teacher, _ = train_teacher(ds, cfg_seed)
        for mode in modes:
            cfg_m = replace(cfg_seed, mode=mode)
            model, _ = train_student(ds, teacher, cfg_m)
            reports.append(evaluate_split(
                model, ds, "test", feature_block_for_mode(mode),
                seed=seed, mode=mode))
    return reports


def aggregate_reports(reports: list[metrics.EvalReport]) -> dict[str, dict]:
    """Per-mode mean and std of each metric."""
    out: dict[str, dict] = {}
    for mode in {r.mode for r in reports}:
        rows = [r for r in reports if r.mode == mode]
        out[mode] = {
            "n_runs": len(rows),
            "auc_mean": float(np.mean([r.auc for r in rows])),
            "auc_std": float(np.std([r.auc for r in rows])),
            "ks_mean": float(np.mean([r.ks for r in rows])),
            "ks_std": float(np.std([r.ks for r in rows])),
            "recall_mean": float(np.mean([r.recall_at_k for r in rows])),
            "recall_std": float(np.std([r.recall_at_k for r in rows])),
        }
    return out
