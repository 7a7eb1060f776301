from keyscope.models.builders import build_allconv, build_keynet, build_model
from keyscope.models.config import ArchitectureConfig
from keyscope.models.counting import ParamCount, count_params
from keyscope.models.model import KeyModel
from keyscope.models.predict import Prediction, predict, predict_batch

__all__ = [
    "ArchitectureConfig",
    "KeyModel",
    "ParamCount",
    "Prediction",
    "build_allconv",
    "build_keynet",
    "build_model",
    "count_params",
    "predict",
    "predict_batch",
]
