"""Equivariant network: graphs, autodiff, model, optimizer."""

from .graph import SPECIES, Geometry, Graph, GraphError, build_graph
from .model import (
    FeatureTensor,
    LayerWeights,
    Model,
    ModelConfig,
    ModelError,
    channel_norms,
    conv_descriptor,
    convolution,
    edge_bundle,
    forward,
    gate,
    gated_spec,
    gradient,
    init_model,
    load_checkpoint,
    loss_and_gradient,
    loss_mse,
    model_layout,
    param_count,
    prepare,
    radial_basis,
    save_checkpoint,
    spec_wigner,
)
from .optim import OptimizerState, adam_step, init_optimizer

__all__ = [
    "SPECIES",
    "Geometry",
    "Graph",
    "GraphError",
    "build_graph",
    "FeatureTensor",
    "LayerWeights",
    "Model",
    "ModelConfig",
    "ModelError",
    "channel_norms",
    "conv_descriptor",
    "convolution",
    "edge_bundle",
    "forward",
    "gate",
    "gated_spec",
    "gradient",
    "init_model",
    "load_checkpoint",
    "loss_and_gradient",
    "loss_mse",
    "model_layout",
    "param_count",
    "prepare",
    "radial_basis",
    "save_checkpoint",
    "spec_wigner",
    "OptimizerState",
    "adam_step",
    "init_optimizer",
]
