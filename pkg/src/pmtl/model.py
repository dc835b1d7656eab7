"""Multitask network: shared trunk plus emotion, country, and age heads.

The trunk applies [linear -> layer norm -> leaky ReLU] once per entry of
``shared_dims`` (default 128 then 64 units). Each head consumes the final
trunk representation through its own hidden block(s) of the same recipe,
then an affine output layer: 10 emotion intensities (optionally squashed
by a sigmoid), 4 country logits, and a single standardized-age value.

The age head has two hidden blocks (32 then 16 units) under the default
``two-layer-age`` variant to step down from the trunk width; the
``one-hidden-all`` variant gives every head exactly one hidden block.

Parameters live in a plain ordered dict of named float64 tensors; the
layer plan derived from ModelConfig fixes their order, their shapes, and
the initialization draw order, so a seed fully determines the network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np

from .errors import ShapeError
from .layers import (
    layer_norm_backward,
    layer_norm_forward,
    leaky_relu_backward,
    leaky_relu_forward,
    linear_backward,
    linear_forward,
    sigmoid_backward,
    sigmoid_forward,
)
from .rng import RngStream

HEAD_VARIANTS = ("two-layer-age", "one-hidden-all")
EMOTION_ACTIVATIONS = ("sigmoid", "linear")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    shared_dims: tuple[int, ...] = (128, 64)
    age_head_dims: tuple[int, ...] = (32, 16)
    emotion_hidden: int = 32
    country_hidden: int = 32
    emotion_out: int = 10
    country_out: int = 4
    leaky_slope: float = 0.01
    ln_eps: float = 1e-5
    head_variant: str = "two-layer-age"
    emotion_activation: str = "sigmoid"

    def __post_init__(self):
        dims = (
            (self.input_dim,)
            + tuple(self.shared_dims)
            + tuple(self.age_head_dims)
            + (self.emotion_hidden, self.country_hidden, self.emotion_out, self.country_out)
        )
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all dimensions must be >= 1, got {dims}")
        if not self.shared_dims:
            raise ValueError("shared_dims must not be empty")
        if self.head_variant not in HEAD_VARIANTS:
            raise ValueError(f"head_variant must be one of {HEAD_VARIANTS}")
        if self.emotion_activation not in EMOTION_ACTIVATIONS:
            raise ValueError(f"emotion_activation must be one of {EMOTION_ACTIVATIONS}")
        if self.head_variant == "two-layer-age" and len(self.age_head_dims) != 2:
            raise ValueError("two-layer-age needs exactly 2 age_head_dims")
        object.__setattr__(self, "shared_dims", tuple(int(d) for d in self.shared_dims))
        object.__setattr__(self, "age_head_dims", tuple(int(d) for d in self.age_head_dims))

    @property
    def trunk_out(self) -> int:
        return self.shared_dims[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("shared_dims", "age_head_dims"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


class LayerPlan(NamedTuple):
    """Named (d_in, d_out) pairs for every block and output layer."""

    trunk: tuple[tuple[str, int, int], ...]
    emotion_blocks: tuple[tuple[str, int, int], ...]
    emotion_out: tuple[str, int, int]
    country_blocks: tuple[tuple[str, int, int], ...]
    country_out: tuple[str, int, int]
    age_blocks: tuple[tuple[str, int, int], ...]
    age_out: tuple[str, int, int]


def layer_plan(config: ModelConfig) -> LayerPlan:
    trunk = []
    d = config.input_dim
    for i, width in enumerate(config.shared_dims):
        trunk.append((f"shared{i}", d, width))
        d = width

    if config.head_variant == "two-layer-age":
        a0, a1 = config.age_head_dims
        age_blocks = ((f"age_hidden0", d, a0), (f"age_hidden1", a0, a1))
        age_out = ("age_out", a1, 1)
    else:
        a0 = config.age_head_dims[0]
        age_blocks = (("age_hidden0", d, a0),)
        age_out = ("age_out", a0, 1)

    return LayerPlan(
        trunk=tuple(trunk),
        emotion_blocks=(("emotion_hidden", d, config.emotion_hidden),),
        emotion_out=("emotion_out", config.emotion_hidden, config.emotion_out),
        country_blocks=(("country_hidden", d, config.country_hidden),),
        country_out=("country_out", config.country_hidden, config.country_out),
        age_blocks=age_blocks,
        age_out=age_out,
    )


def _iter_layers(plan: LayerPlan):
    """All (name, d_in, d_out, has_norm) in canonical parameter order."""
    for name, d_in, d_out in plan.trunk:
        yield name, d_in, d_out, True
    for name, d_in, d_out in plan.emotion_blocks:
        yield name, d_in, d_out, True
    yield (*plan.emotion_out, False)
    for name, d_in, d_out in plan.country_blocks:
        yield name, d_in, d_out, True
    yield (*plan.country_out, False)
    for name, d_in, d_out in plan.age_blocks:
        yield name, d_in, d_out, True
    yield (*plan.age_out, False)


def init_params(config: ModelConfig, rng: RngStream) -> dict[str, np.ndarray]:
    """Fresh parameters: weights uniform in (-s, s) with s = sqrt(1/fan_in),
    biases zero, layer-norm scale 1 and shift 0. Draw order follows the
    layer plan, so a given seed always yields the same tensors."""
    params: dict[str, np.ndarray] = {}
    plan = layer_plan(config)
    for name, d_in, d_out, has_norm in _iter_layers(plan):
        s = math.sqrt(1.0 / d_in)
        w = rng.uniform(d_in * d_out).reshape(d_in, d_out) * (2.0 * s) - s
        params[f"{name}.w"] = w
        params[f"{name}.b"] = np.zeros(d_out)
        if has_norm:
            params[f"{name}.gamma"] = np.ones(d_out)
            params[f"{name}.beta"] = np.zeros(d_out)
    return params


def param_count(params: dict[str, np.ndarray]) -> int:
    return sum(v.size for v in params.values())


def params_copy(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


# -- forward ----------------------------------------------------------------


class BlockCache(NamedTuple):
    lin: object
    ln: object
    act: object


class ForwardCaches(NamedTuple):
    config: ModelConfig
    trunk: tuple
    emotion: tuple
    country: tuple
    age: tuple
    emotion_sigmoid: object  # None under the linear variant


@dataclass(frozen=True)
class ModelOutputs:
    emotion: np.ndarray        # (n, emotion_out)
    age_scaled: np.ndarray     # (n, 1), standardized scale
    country_logits: np.ndarray  # (n, country_out)


def _block_forward(params, name, x, config):
    h, lin = linear_forward(x, params[f"{name}.w"], params[f"{name}.b"])
    h, ln = layer_norm_forward(h, params[f"{name}.gamma"], params[f"{name}.beta"], config.ln_eps)
    h, act = leaky_relu_forward(h, config.leaky_slope)
    return h, BlockCache(lin, ln, act)


def _chain_forward(params, blocks, out_layer, x, config):
    caches = []
    h = x
    for name, _, _ in blocks:
        h, cache = _block_forward(params, name, h, config)
        caches.append(cache)
    out_name = out_layer[0]
    y, out_cache = linear_forward(h, params[f"{out_name}.w"], params[f"{out_name}.b"])
    return y, (tuple(caches), out_cache)


def forward(params: dict, config: ModelConfig, x: np.ndarray):
    """Run the network on a batch; returns (ModelOutputs, ForwardCaches).

    Rows are independent (layer norm acts per row), so batched and
    row-at-a-time evaluation agree.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ShapeError("model forward input", x.shape, (-1, config.input_dim))
    plan = layer_plan(config)

    h = x
    trunk_caches = []
    for name, _, _ in plan.trunk:
        h, cache = _block_forward(params, name, h, config)
        trunk_caches.append(cache)

    emotion, emotion_cache = _chain_forward(params, plan.emotion_blocks, plan.emotion_out, h, config)
    sig_cache = None
    if config.emotion_activation == "sigmoid":
        emotion, sig_cache = sigmoid_forward(emotion)
    country, country_cache = _chain_forward(params, plan.country_blocks, plan.country_out, h, config)
    age, age_cache = _chain_forward(params, plan.age_blocks, plan.age_out, h, config)

    outputs = ModelOutputs(emotion=emotion, age_scaled=age, country_logits=country)
    caches = ForwardCaches(
        config=config,
        trunk=tuple(trunk_caches),
        emotion=emotion_cache,
        country=country_cache,
        age=age_cache,
        emotion_sigmoid=sig_cache,
    )
    return outputs, caches


# -- backward ---------------------------------------------------------------


def _block_backward(params, grads, name, cache: BlockCache, dy):
    dy = leaky_relu_backward(cache.act, dy)
    dy, dgamma, dbeta = layer_norm_backward(cache.ln, dy)
    grads[f"{name}.gamma"] = dgamma
    grads[f"{name}.beta"] = dbeta
    dx, dw, db = linear_backward(cache.lin, dy)
    grads[f"{name}.w"] = dw
    grads[f"{name}.b"] = db
    return dx


def _chain_backward(params, grads, blocks, out_layer, chain_cache, dy):
    block_caches, out_cache = chain_cache
    out_name = out_layer[0]
    dy, dw, db = linear_backward(out_cache, dy)
    grads[f"{out_name}.w"] = dw
    grads[f"{out_name}.b"] = db
    for (name, _, _), cache in zip(reversed(blocks), reversed(block_caches)):
        dy = _block_backward(params, grads, name, cache, dy)
    return dy


def backward(params: dict, caches: ForwardCaches, d_outputs: dict) -> dict[str, np.ndarray]:
    """Gradients for every parameter given output-side gradients.

    ``d_outputs`` maps "emotion", "age_scaled", "country_logits" to arrays
    shaped like the corresponding outputs (missing keys mean zero). The
    trunk gradient is the sum of the three head contributions.
    """
    config = caches.config
    plan = layer_plan(config)
    grads: dict[str, np.ndarray] = {}

    n = caches.trunk[0].lin.x.shape[0]
    trunk_width = plan.trunk[-1][2]
    d_shared = np.zeros((n, trunk_width))

    d_emotion = d_outputs.get("emotion")
    if d_emotion is not None:
        d_emotion = np.asarray(d_emotion, dtype=np.float64)
        if caches.emotion_sigmoid is not None:
            d_emotion = sigmoid_backward(caches.emotion_sigmoid, d_emotion)
        d_shared += _chain_backward(
            params, grads, plan.emotion_blocks, plan.emotion_out, caches.emotion, d_emotion
        )
    else:
        _zero_chain(params, grads, plan.emotion_blocks, plan.emotion_out)

    d_country = d_outputs.get("country_logits")
    if d_country is not None:
        d_shared += _chain_backward(
            params, grads, plan.country_blocks, plan.country_out, caches.country,
            np.asarray(d_country, dtype=np.float64),
        )
    else:
        _zero_chain(params, grads, plan.country_blocks, plan.country_out)

    d_age = d_outputs.get("age_scaled")
    if d_age is not None:
        d_shared += _chain_backward(
            params, grads, plan.age_blocks, plan.age_out, caches.age,
            np.asarray(d_age, dtype=np.float64),
        )
    else:
        _zero_chain(params, grads, plan.age_blocks, plan.age_out)

    dy = d_shared
    for (name, _, _), cache in zip(reversed(plan.trunk), reversed(caches.trunk)):
        dy = _block_backward(params, grads, name, cache, dy)
    return grads


def _zero_chain(params, grads, blocks, out_layer):
    for name, _, _ in blocks:
        for suffix in ("w", "b", "gamma", "beta"):
            grads[f"{name}.{suffix}"] = np.zeros_like(params[f"{name}.{suffix}"])
    out_name = out_layer[0]
    grads[f"{out_name}.w"] = np.zeros_like(params[f"{out_name}.w"])
    grads[f"{out_name}.b"] = np.zeros_like(params[f"{out_name}.b"])


# -- inference --------------------------------------------------------------


@dataclass(frozen=True)
class PredictionSet:
    emotion: np.ndarray       # (n, emotion_out), in [0, 1] under sigmoid
    age_years: np.ndarray     # (n,), de-standardized
    country: np.ndarray       # (n,), int class ids; argmax ties -> lowest id


def predict(params: dict, config: ModelConfig, x: np.ndarray, age_scaler) -> PredictionSet:
    """Inference: emotion vector, age in years, and country class per row.

    ``age_scaler`` maps the standardized age output back to years via its
    ``descale`` method. Country is the argmax of the logits; numpy argmax
    resolves ties toward the lowest class index.
    """
    outputs, _ = forward(params, config, x)
    age_years = age_scaler.descale(outputs.age_scaled[:, 0])
    country = np.argmax(outputs.country_logits, axis=1).astype(np.int64)
    return PredictionSet(emotion=outputs.emotion, age_years=age_years, country=country)
