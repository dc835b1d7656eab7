"""Adam optimizer, epoch loop, and validation-based model selection.

A run is strictly sequential and deterministic: the seed derives two
independent sub-streams (index 0 for parameter init, index 1 for epoch
shuffling) and nothing else consumes randomness. The best parameters by
validation combined score are retained, with ties resolved toward the
earliest epoch, and training stops once the score has not improved for
``patience`` consecutive epochs.

Wall-clock fields in RunHistory are informational only; the canonical
form used for run comparison (``RunHistory.canonical_dict``) excludes
them, since timing can never be bit-reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, asdict

import numpy as np

from .data import SplitDataset, SplitPart, batches
from .errors import ConfigError, DataError, NumericalError
from .losses import LossBreakdown, LossConfig, combine, cross_entropy_loss, mse_loss
from .metrics import MetricsBundle, compute_bundle
from .model import (
    ModelConfig,
    backward,
    forward,
    init_params,
    params_copy,
    predict,
    zero_grads,
)
from .rng import RngStream, derive_subseed


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig
    loss: LossConfig = LossConfig()
    seed: int = 0
    batch_size: int = 8
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 100
    patience: int = 15
    clip_norm: float | None = None  # optional global-norm gradient clip

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise ValueError(f"adam_eps must be > 0, got {self.adam_eps}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0 <= self.patience <= self.max_epochs:
            raise ValueError(
                f"patience must lie in [0, max_epochs], got {self.patience}"
            )
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError(f"clip_norm must be > 0, got {self.clip_norm}")

    def to_dict(self) -> dict:
        d = {
            "model": self.model.to_dict(),
            "loss": asdict(self.loss),
            "seed": self.seed,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "clip_norm": self.clip_norm,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        if "loss" in d:
            d["loss"] = LossConfig(**d["loss"])
        return cls(**d)


# -- optimizer --------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(m=zero_grads(params), v=zero_grads(params))


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig):
    """One bias-corrected adaptive-moment update, in place.

    The bias correction makes the very first step have magnitude close to
    the learning rate elementwise, independent of gradient scale. Returns
    the mutated ``(params, state)``.
    """
    for name in params:
        if not np.isfinite(grads[name]).all():
            raise NumericalError(f"non-finite gradient for tensor {name!r}")
    state.step += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.adam_eps)
    return params, state


def grad_global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients down so the global L2 norm is at most max_norm."""
    norm = grad_global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return grads


# -- run records ------------------------------------------------------------


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: LossBreakdown
    val: MetricsBundle
    wall_seconds: float

    def canonical_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss.to_dict(),
            "val": self.val.to_dict(),
        }


@dataclass(frozen=True)
class RunHistory:
    initial_val: MetricsBundle  # untrained (epoch 0) validation metrics
    epochs: tuple[EpochRecord, ...]
    best_epoch: int
    best_val: MetricsBundle
    stopped_early: bool
    wall_seconds: float

    def canonical_dict(self) -> dict:
        """Everything that the determinism contract covers (no timing)."""
        return {
            "initial_val": self.initial_val.to_dict(),
            "epochs": [e.canonical_dict() for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_val": self.best_val.to_dict(),
            "stopped_early": self.stopped_early,
        }


# -- evaluation -------------------------------------------------------------


def evaluate(params: dict, config: ModelConfig, split: SplitPart, age_scaler) -> MetricsBundle:
    """Predict on a labeled split and score all three tasks."""
    if not split.labeled:
        raise DataError("evaluate needs a labeled split")
    preds = predict(params, config, split.x, age_scaler)
    return compute_bundle(
        pred_emotion=preds.emotion,
        true_emotion=split.y_emotion,
        pred_country=preds.country,
        true_country=split.y_country,
        pred_age_years=preds.age_years,
        true_age_years=split.y_age,
    )


# -- training ---------------------------------------------------------------


def _epoch_pass(params, config: TrainConfig, x, y_emotion, y_country, y_age_scaled,
                shuffle_rng: RngStream, adam: AdamState) -> LossBreakdown:
    """One epoch of minibatch updates; returns per-sample mean losses."""
    n = x.shape[0]
    w_e, w_c, w_a = config.loss.weights()
    sum_e = sum_c = sum_a = 0.0
    for batch in batches(n, config.batch_size, shuffle_rng):
        outputs, caches = forward(params, config.model, x[batch])
        l_e, g_e = mse_loss(outputs.emotion, y_emotion[batch])
        l_c, g_c = cross_entropy_loss(outputs.country_logits, y_country[batch])
        l_a, g_a = mse_loss(outputs.age_scaled, y_age_scaled[batch])
        combine(l_e, l_c, l_a, config.loss)  # raises on non-finite components
        grads = backward(params, caches, {
            "emotion": g_e * w_e,
            "country_logits": g_c * w_c,
            "age_scaled": g_a * w_a,
        })
        if config.clip_norm is not None:
            clip_grads(grads, config.clip_norm)
        adam_step(params, grads, adam, config)
        frac = batch.size / n
        sum_e += l_e * frac
        sum_c += l_c * frac
        sum_a += l_a * frac
    return combine(sum_e, sum_c, sum_a, config.loss)


def train_run(config: TrainConfig, data: SplitDataset):
    """Full training loop; returns ``(best_params, history)``.

    ``data`` is used as given (standardize first if desired). Randomness:
    sub-seed 0 of ``config.seed`` initializes parameters, sub-seed 1
    drives every epoch's shuffle; identical (config, data) reproduce the
    history bit for bit, timing fields aside.
    """
    if not (data.train.labeled and data.val.labeled):
        raise DataError("train and val splits must be labeled")
    if data.dim != config.model.input_dim:
        raise ConfigError(
            f"model expects input_dim {config.model.input_dim}, data has {data.dim}"
        )

    t_start = time.perf_counter()
    init_rng = RngStream(derive_subseed(config.seed, 0))
    shuffle_rng = RngStream(derive_subseed(config.seed, 1))
    params = init_params(config.model, init_rng)
    adam = init_adam(params)
    scaler = data.age_scaler
    y_age_scaled = scaler.scale(data.train.y_age).reshape(-1, 1)

    initial_val = evaluate(params, config.model, data.val, scaler)
    records: list[EpochRecord] = []
    best_epoch = 0
    best_score = -math.inf
    best_val = initial_val
    best_params = params_copy(params)
    stopped_early = False

    for epoch in range(1, config.max_epochs + 1):
        t_epoch = time.perf_counter()
        try:
            train_loss = _epoch_pass(
                params, config, data.train.x, data.train.y_emotion,
                data.train.y_country, y_age_scaled, shuffle_rng, adam,
            )
        except NumericalError as exc:
            raise NumericalError(f"epoch {epoch}: {exc}") from exc
        val = evaluate(params, config.model, data.val, scaler)
        records.append(EpochRecord(
            epoch=epoch, train_loss=train_loss, val=val,
            wall_seconds=time.perf_counter() - t_epoch,
        ))
        if val.score > best_score:  # strict: ties keep the earliest epoch
            best_score = val.score
            best_epoch = epoch
            best_val = val
            best_params = params_copy(params)
        if epoch - best_epoch >= config.patience:
            stopped_early = epoch < config.max_epochs
            break

    history = RunHistory(
        initial_val=initial_val,
        epochs=tuple(records),
        best_epoch=best_epoch,
        best_val=best_val,
        stopped_early=stopped_early,
        wall_seconds=time.perf_counter() - t_start,
    )
    return best_params, history
