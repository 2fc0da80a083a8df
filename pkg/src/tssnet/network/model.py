"""The network object: parameters, forward/backward, head surgery, features.

Weights are initialized with the uniform fan-in scheme
U(-1/sqrt(fan_in), 1/sqrt(fan_in)) and zero biases, drawn layer by layer in
checkpoint order from a single seeded generator, so a (spec, seed) pair
fully determines the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datamodel import CLASS_NAMES, PreprocessSpec
from ..errors import ParameterError
from . import layers
from .spec import (
    ConvSpec,
    DenseSpec,
    NetworkSpec,
    PoolSpec,
    alexnet_spec,
    parameter_shapes,
    stage_shapes,
    tiny_spec,
)


@dataclass
class FeatureMaps:
    """Activations per conv stage (post-pool where a pool follows)."""

    per_stage: list[tuple[str, np.ndarray]]  # (stage name, C x H x W array)


def _default_class_names(num_classes: int) -> tuple[str, ...]:
    if num_classes == len(CLASS_NAMES):
        return CLASS_NAMES
    return tuple(f"class_{i}" for i in range(num_classes))


class Network:
    """A spec plus its parameter tensors.

    Safe for concurrent inference; mutation (head replacement, training
    updates) requires exclusive access.
    """

    def __init__(self, spec: NetworkSpec, params: dict[str, np.ndarray],
                 class_names: tuple[str, ...] | None = None,
                 preprocess: PreprocessSpec | None = None):
        expected = parameter_shapes(spec)
        for name, shape in expected.items():
            if name not in params:
                raise ParameterError(f"missing parameter tensor {name!r}")
            if tuple(params[name].shape) != shape:
                raise ParameterError(f"parameter {name!r} has shape {params[name].shape}, "
                                     f"expected {shape}")
        self.spec = spec
        self.params = {name: params[name] for name in expected}  # checkpoint order
        self.class_names = class_names or _default_class_names(spec.num_classes)
        if len(self.class_names) != spec.num_classes:
            raise ParameterError(f"{len(self.class_names)} class names for "
                                 f"{spec.num_classes} classes")
        self.preprocess = preprocess or PreprocessSpec(resize_side=spec.input_side)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def _check_input(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch)
        expected = (self.spec.in_channels, self.spec.input_side, self.spec.input_side)
        if batch.ndim != 4 or batch.shape[1:] != expected:
            raise ParameterError(f"expected batch of shape (B, {expected[0]}, {expected[1]}, "
                                 f"{expected[2]}), got {batch.shape}")
        return batch.astype(self.dtype, copy=False)

    def forward(self, batch: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None,
                capture_stages: bool = False):
        """Run the network; returns (logits, cache).

        Dropout is active only when ``train`` is true (an rng is then
        required); inference is deterministic.  With ``capture_stages`` the
        cache also carries per-conv-stage activations for feature-map export.
        """
        x = self._check_input(batch)
        if train and rng is None:
            raise ParameterError("training-mode forward needs an rng for dropout")
        steps = []
        stages: list[tuple[str, np.ndarray]] = []
        feature_layers = self.spec.feature_layers
        conv_i = 0
        for i, layer in enumerate(feature_layers):
            if isinstance(layer, ConvSpec):
                conv_i += 1
                name = f"conv{conv_i}"
                w, b = self.params[f"{name}.weight"], self.params[f"{name}.bias"]
                x, cache = layers.conv_forward(x, w, b, layer.stride, layer.padding)
                steps.append(("conv", name, cache))
                x, rcache = layers.relu_forward(x)
                steps.append(("relu", None, rcache))
                if capture_stages and not (i + 1 < len(feature_layers)
                                           and isinstance(feature_layers[i + 1], PoolSpec)):
                    stages.append((name, x[0].copy()))
            else:
                x, cache = layers.maxpool_forward(x, layer.kernel, layer.stride)
                steps.append(("pool", None, cache))
                if capture_stages:
                    stages.append((f"conv{conv_i}", x[0].copy()))
        shape_before_flatten = x.shape
        x = x.reshape(x.shape[0], -1)
        steps.append(("flatten", None, shape_before_flatten))
        for i, layer in enumerate(self.spec.classifier_layers, start=1):
            if layer.dropout > 0 and train:
                x, mask = layers.dropout_forward(x, layer.dropout, rng)
                steps.append(("dropout", None, mask))
            name = f"fc{i}"
            w, b = self.params[f"{name}.weight"], self.params[f"{name}.bias"]
            x, cache = layers.linear_forward(x, w, b)
            steps.append(("linear", name, cache))
            if layer.relu:
                x, rcache = layers.relu_forward(x)
                steps.append(("relu", None, rcache))
        return x, {"steps": steps, "stages": stages}

    def backward(self, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        """Gradient of the loss w.r.t. every parameter, given d(loss)/d(logits)."""
        grads: dict[str, np.ndarray] = {}
        dx = dlogits
        for kind, name, step_cache in reversed(cache["steps"]):
            if kind == "linear":
                dx, dw, db = layers.linear_backward(dx, step_cache, self.params[f"{name}.weight"])
                grads[f"{name}.weight"] = dw
                grads[f"{name}.bias"] = db
            elif kind == "relu":
                dx = layers.relu_backward(dx, step_cache)
            elif kind == "dropout":
                dx = layers.dropout_backward(dx, step_cache)
            elif kind == "flatten":
                dx = dx.reshape(step_cache)
            elif kind == "pool":
                dx = layers.maxpool_backward(dx, step_cache)
            elif kind == "conv":
                dx, dw, db = layers.conv_backward(dx, step_cache)
                grads[f"{name}.weight"] = dw
                grads[f"{name}.bias"] = db
        return {name: grads[name] for name in self.params}

    def copy(self) -> "Network":
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()},
                       self.class_names, self.preprocess)


def initialize_params(spec: NetworkSpec, seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(spec).items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, shape).astype(dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    return params


def build_network(spec: NetworkSpec, seed: int = 0, dtype=np.float32,
                  class_names: tuple[str, ...] | None = None,
                  preprocess: PreprocessSpec | None = None) -> Network:
    return Network(spec, initialize_params(spec, seed, dtype), class_names, preprocess)


def build_backbone(num_classes: int = 3, seed: int = 0, dtype=np.float32) -> Network:
    """Freshly initialized 5-conv/3-FC backbone with an ``num_classes``-way head."""
    return build_network(alexnet_spec(num_classes), seed=seed, dtype=dtype)


def build_tiny(num_classes: int = 3, seed: int = 0, dtype=np.float32) -> Network:
    """Desk-scale network for tests and quick experiments."""
    return build_network(tiny_spec(num_classes), seed=seed, dtype=dtype)


def replace_head(network: Network, new_num_classes: int, seed: int = 0) -> Network:
    """Swap the final linear layer for a fresh ``new_num_classes``-way one.

    Every other tensor is copied bit-identically and stays trainable.
    """
    if new_num_classes < 2:
        raise ParameterError(f"new_num_classes must be >= 2, got {new_num_classes}")
    old_spec = network.spec
    classifier = old_spec.classifier_layers[:-1] + (DenseSpec(new_num_classes, relu=False),)
    new_spec = NetworkSpec(old_spec.feature_layers, classifier,
                           num_classes=new_num_classes, input_side=old_spec.input_side,
                           in_channels=old_spec.in_channels)
    head_name = f"fc{len(classifier)}"
    rng = np.random.default_rng(seed)
    params = {}
    for name, value in network.params.items():
        if name.startswith(head_name + "."):
            continue
        params[name] = value.copy()
    in_features = parameter_shapes(new_spec)[f"{head_name}.weight"][1]
    bound = 1.0 / np.sqrt(in_features)
    params[f"{head_name}.weight"] = rng.uniform(
        -bound, bound, (new_num_classes, in_features)).astype(network.dtype)
    params[f"{head_name}.bias"] = np.zeros(new_num_classes, dtype=network.dtype)
    return Network(new_spec, params, _default_class_names(new_num_classes),
                   network.preprocess)


def forward(network: Network, batch: np.ndarray) -> np.ndarray:
    """Inference-mode logits for a batch."""
    logits, _ = network.forward(batch, train=False)
    return logits


def predict_proba(network: Network, batch: np.ndarray) -> np.ndarray:
    """Row-wise softmax over inference logits; rows sum to 1."""
    return layers.softmax(forward(network, batch))


def extract_feature_maps(network: Network, image: np.ndarray) -> FeatureMaps:
    """Per-conv-stage activations for one preprocessed image (C x S x S)."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise ParameterError(f"expected a single CxHxW image, got shape {image.shape}")
    _, cache = network.forward(image[None], capture_stages=True)
    maps = FeatureMaps(per_stage=cache["stages"])
    expected = stage_shapes(network.spec)
    actual = [(name, arr.shape) for name, arr in maps.per_stage]
    assert actual == [(n, s) for n, s in expected], f"stage shape mismatch: {actual} vs {expected}"
    return maps
