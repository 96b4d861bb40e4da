"""X-ray transforms on rotationally symmetric Cartan-Hadamard models."""
from .manifold import (
    ManifoldModel,
    ModelError,
    WarpedProfile,
    make_euclidean,
    make_hyperbolic,
    make_warped,
    make_warped_preset,
    parse_model,
    profile_from_curvature,
    sphere_volume,
)

__version__ = "0.1.0"

__all__ = [
    "ManifoldModel",
    "ModelError",
    "WarpedProfile",
    "make_euclidean",
    "make_hyperbolic",
    "make_warped",
    "make_warped_preset",
    "parse_model",
    "profile_from_curvature",
    "sphere_volume",
]
