"""CNN architecture, parameters, inference, checkpoints, feature maps."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    FeatureMaps,
    Network,
    build_backbone,
    build_network,
    build_tiny,
    extract_feature_maps,
    forward,
    initialize_params,
    predict_proba,
    replace_head,
)
from .spec import (
    ConvSpec,
    DenseSpec,
    NetworkSpec,
    PoolSpec,
    alexnet_spec,
    feature_shapes,
    flatten_dim,
    parameter_shapes,
    spec_digest,
    stage_shapes,
    tiny_spec,
)

__all__ = [
    "ConvSpec", "DenseSpec", "PoolSpec", "NetworkSpec",
    "alexnet_spec", "tiny_spec", "feature_shapes", "stage_shapes",
    "flatten_dim", "parameter_shapes", "spec_digest",
    "Network", "FeatureMaps", "build_network", "build_backbone", "build_tiny",
    "initialize_params", "replace_head", "forward", "predict_proba",
    "extract_feature_maps", "save_checkpoint", "load_checkpoint",
]
