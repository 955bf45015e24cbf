"""Probabilistic latent spaces over collections of deforming triangle
meshes: rotation-invariant deformation features, a from-scratch
variational autoencoder, and shape generation / interpolation /
embedding / exploration on top.
"""

__version__ = "0.1.0"

from .mesh import Mesh, MeshError, load_obj, save_obj, connectivity_key
from .rimd import (
    FeatureError,
    ReferenceGeometry,
    RimdFeature,
    encode,
    reconstruct,
    feature_distance,
)

__all__ = [
    "__version__",
    "Mesh",
    "MeshError",
    "load_obj",
    "save_obj",
    "connectivity_key",
    "FeatureError",
    "ReferenceGeometry",
    "RimdFeature",
    "encode",
    "reconstruct",
    "feature_distance",
]
