"""Exemplar-guided generative facial inpainting at desk scale."""

from .config import (
    BrushParams,
    LossWeights,
    ModelConfig,
    TrainConfig,
    default_brush_params,
    default_phi,
)
from .errors import NumericError, ParameterError

__all__ = [
    "BrushParams",
    "LossWeights",
    "ModelConfig",
    "TrainConfig",
    "default_brush_params",
    "default_phi",
    "NumericError",
    "ParameterError",
]

__version__ = "0.1.0"
