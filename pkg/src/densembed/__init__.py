"""Density-embedded layers on a small numpy autodiff core."""
from .autodiff import Tensor, backward, contract
from .gamma import GammaOperator
from .layers import MODEL_NAMES, build_model, param_count
from .train import TrainConfig, fit

__all__ = ["Tensor", "backward", "contract", "GammaOperator", "MODEL_NAMES", "build_model", "param_count",
           "TrainConfig", "fit"]
__version__ = "0.1.0"
