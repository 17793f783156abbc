"""Partially personalized federated learning for heterogeneous tabular clients."""
from .model import FeatureSchema, GLModel, ModelConfig, build_model, partition_parameters

__version__ = "0.1.0"

__all__ = ["FeatureSchema", "GLModel", "ModelConfig", "build_model", "partition_parameters"]
