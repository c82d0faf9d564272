"""Emotion editing toolkit: numeric core bindings."""

import json

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    ModelMismatch,
    NumericalError,
    apply_homography,
    coefficient_of_variation,
    emotion_names,
    estimate_homography,
    frechet_distance,
    hann_weights,
    identity_similarity,
    lie,
    load_png,
    save_png,
    smooth,
    total_variation,
)
from . import _core


def default_config():
    return json.loads(_core.default_config())


def load_config(path):
    return json.loads(_core.load_config(str(path)))


__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "ModelMismatch",
    "NumericalError",
    "apply_homography",
    "coefficient_of_variation",
    "default_config",
    "emotion_names",
    "estimate_homography",
    "frechet_distance",
    "hann_weights",
    "identity_similarity",
    "lie",
    "load_config",
    "load_png",
    "save_png",
    "smooth",
    "total_variation",
]
