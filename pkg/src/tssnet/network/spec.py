"""Layer plans and shape arithmetic for the convolutional classifier."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from ..errors import ParameterError


@dataclass(frozen=True)
class ConvSpec:
    """Convolution (+ ReLU) layer."""

    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class PoolSpec:
    """Max-pooling layer (no padding)."""

    kernel: int
    stride: int


@dataclass(frozen=True)
class DenseSpec:
    """Fully connected layer; optional inverted dropout applied to its input."""

    out_features: int
    relu: bool = True
    dropout: float = 0.0


@dataclass(frozen=True)
class NetworkSpec:
    feature_layers: tuple
    classifier_layers: tuple
    num_classes: int
    input_side: int = 224
    in_channels: int = 3

    def __post_init__(self):
        if self.num_classes < 2:
            raise ParameterError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.classifier_layers:
            raise ParameterError("classifier_layers must not be empty")
        last = self.classifier_layers[-1]
        if last.out_features != self.num_classes or last.relu:
            raise ParameterError("final classifier layer must be linear(., num_classes) "
                                 "without ReLU")
        for layer in self.feature_layers:
            if not isinstance(layer, (ConvSpec, PoolSpec)):
                raise ParameterError(f"unexpected feature layer {layer!r}")
        for layer in self.classifier_layers:
            if not isinstance(layer, DenseSpec):
                raise ParameterError(f"unexpected classifier layer {layer!r}")
            if not 0.0 <= layer.dropout < 1.0:
                raise ParameterError(f"dropout must be in [0, 1), got {layer.dropout}")
        feature_shapes(self)  # raises if the layer arithmetic is inconsistent

    @property
    def conv_count(self) -> int:
        return sum(isinstance(l, ConvSpec) for l in self.feature_layers)

    def to_dict(self) -> dict:
        return {
            "feature_layers": [
                {"conv": [l.out_channels, l.kernel, l.stride, l.padding]}
                if isinstance(l, ConvSpec) else {"pool": [l.kernel, l.stride]}
                for l in self.feature_layers
            ],
            "classifier_layers": [
                {"linear": l.out_features, "relu": l.relu, "dropout": l.dropout}
                for l in self.classifier_layers
            ],
            "num_classes": self.num_classes,
            "input_side": self.input_side,
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        features = []
        for entry in d["feature_layers"]:
            if "conv" in entry:
                features.append(ConvSpec(*entry["conv"]))
            else:
                features.append(PoolSpec(*entry["pool"]))
        classifier = tuple(DenseSpec(e["linear"], e["relu"], e["dropout"])
                           for e in d["classifier_layers"])
        return cls(tuple(features), classifier, num_classes=d["num_classes"],
                   input_side=d["input_side"], in_channels=d["in_channels"])


def conv_out_side(side: int, kernel: int, stride: int, padding: int) -> int:
    out = (side + 2 * padding - kernel) // stride + 1
    if side + 2 * padding < kernel or out < 1:
        raise ParameterError(f"kernel {kernel} (stride {stride}, padding {padding}) "
                             f"does not fit a {side}-pixel input")
    return out


def pool_out_side(side: int, kernel: int, stride: int) -> int:
    if side < kernel:
        raise ParameterError(f"pool kernel {kernel} does not fit a {side}-pixel input")
    return (side - kernel) // stride + 1


def feature_shapes(spec: NetworkSpec) -> list[tuple[str, tuple[int, int, int]]]:
    """(layer name, (C, H, W)) after every feature layer, input first."""
    channels, side = spec.in_channels, spec.input_side
    shapes = [("input", (channels, side, side))]
    conv_i = pool_i = 0
    for layer in spec.feature_layers:
        if isinstance(layer, ConvSpec):
            conv_i += 1
            side = conv_out_side(side, layer.kernel, layer.stride, layer.padding)
            channels = layer.out_channels
            shapes.append((f"conv{conv_i}", (channels, side, side)))
        else:
            pool_i += 1
            side = pool_out_side(side, layer.kernel, layer.stride)
            shapes.append((f"pool{pool_i}", (channels, side, side)))
    return shapes


def flatten_dim(spec: NetworkSpec) -> int:
    c, h, w = feature_shapes(spec)[-1][1]
    return c * h * w


def stage_shapes(spec: NetworkSpec) -> list[tuple[str, tuple[int, int, int]]]:
    """One entry per conv stage: shape after conv+ReLU, or after the pool
    that immediately follows it (the shape a feature-map export uses)."""
    layers = spec.feature_layers
    out = []
    shapes = feature_shapes(spec)[1:]  # drop the input entry
    conv_i = 0
    for i, layer in enumerate(layers):
        if isinstance(layer, ConvSpec):
            conv_i += 1
            shape = shapes[i][1]
            if i + 1 < len(layers) and isinstance(layers[i + 1], PoolSpec):
                shape = shapes[i + 1][1]
            out.append((f"conv{conv_i}", shape))
    return out


def parameter_shapes(spec: NetworkSpec) -> dict[str, tuple[int, ...]]:
    """Checkpoint-ordered map of parameter tensor name -> shape."""
    shapes: dict[str, tuple[int, ...]] = {}
    in_channels = spec.in_channels
    conv_i = 0
    for layer in spec.feature_layers:
        if isinstance(layer, ConvSpec):
            conv_i += 1
            shapes[f"conv{conv_i}.weight"] = (layer.out_channels, in_channels,
                                              layer.kernel, layer.kernel)
            shapes[f"conv{conv_i}.bias"] = (layer.out_channels,)
            in_channels = layer.out_channels
    in_features = flatten_dim(spec)
    for i, layer in enumerate(spec.classifier_layers, start=1):
        shapes[f"fc{i}.weight"] = (layer.out_features, in_features)
        shapes[f"fc{i}.bias"] = (layer.out_features,)
        in_features = layer.out_features
    return shapes


def spec_digest(spec: NetworkSpec) -> str:
    """Content hash of the layer plan (sha256 of its canonical JSON)."""
    canonical = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def alexnet_spec(num_classes: int = 3) -> NetworkSpec:
    """The single-stream 64-192-384-256-256 variant: 5 conv + 3 FC layers.

    No local response normalization; dropout 0.5 ahead of both hidden FC
    layers, matching the widely distributed pretrained-weights variant.
    """
    if num_classes < 2:
        raise ParameterError(f"num_classes must be >= 2, got {num_classes}")
    return NetworkSpec(
        feature_layers=(
            ConvSpec(64, 11, stride=4, padding=2), PoolSpec(3, 2),
            ConvSpec(192, 5, padding=2), PoolSpec(3, 2),
            ConvSpec(384, 3, padding=1),
            ConvSpec(256, 3, padding=1),
            ConvSpec(256, 3, padding=1), PoolSpec(3, 2),
        ),
        classifier_layers=(
            DenseSpec(4096, relu=True, dropout=0.5),
            DenseSpec(4096, relu=True, dropout=0.5),
            DenseSpec(num_classes, relu=False),
        ),
        num_classes=num_classes,
        input_side=224,
    )


def tiny_spec(num_classes: int = 3) -> NetworkSpec:
    """Desk-scale plan for fast tests: 2 conv stages, 1 hidden FC, 96px input.

    This is development scaffolding, not part of the studied architecture.
    """
    if num_classes < 2:
        raise ParameterError(f"num_classes must be >= 2, got {num_classes}")
    return NetworkSpec(
        feature_layers=(
            ConvSpec(16, 5, stride=2, padding=2), PoolSpec(3, 2),
            ConvSpec(32, 3, padding=1), PoolSpec(3, 2),
        ),
        classifier_layers=(
            DenseSpec(128, relu=True, dropout=0.0),
            DenseSpec(num_classes, relu=False),
        ),
        num_classes=num_classes,
        input_side=96,
    )
