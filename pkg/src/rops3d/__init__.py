"""Rotational projection statistics for 3D local surface description and object recognition."""

from .lrf import DegenerateSurfaceError, LocalReferenceFrame, compute_lrf, lrf_error, triangle_scatter
from .library import LibraryVersionError, ModelLibrary, build_model_library
from .matching import DescriptorIndex, FeatureCorrespondence, match_all, match_features, rp_auc, rp_curve
from .mesh import (EmptySurfaceError, GroundTruthPose, LocalSurface, MeshError, TriangleMesh,
                   add_gaussian_noise, compose_scene, crop_local_surface, mesh_resolution)
from .decimate import decimate
from .io import MeshParseError, load_ground_truth, load_mesh, save_ground_truth, save_mesh
from .pipeline import RecognitionParams, RecognitionResult, RecognizedInstance, occlusion, recognize
from .rops import RoPSDescriptor, RopsParams, compute_rops, descriptor_distance
from .shapes import BUNDLED_MODELS, bundled_model

__version__ = "0.1.0"

__all__ = [
    "BUNDLED_MODELS", "DegenerateSurfaceError", "DescriptorIndex", "EmptySurfaceError",
    "FeatureCorrespondence", "GroundTruthPose", "LibraryVersionError", "LocalReferenceFrame",
    "LocalSurface", "MeshError", "MeshParseError", "ModelLibrary", "RecognitionParams",
    "RecognitionResult", "RecognizedInstance", "RoPSDescriptor", "RopsParams", "TriangleMesh",
    "add_gaussian_noise", "build_model_library", "bundled_model", "compose_scene", "compute_lrf",
    "compute_rops", "crop_local_surface", "decimate", "descriptor_distance", "load_ground_truth",
    "load_mesh", "lrf_error", "match_all", "match_features", "mesh_resolution", "occlusion",
    "recognize", "rp_auc", "rp_curve", "save_ground_truth", "save_mesh", "triangle_scatter",
]
