"""Learned removal of quantization artifacts from voxelized point clouds.

The pieces compose as: :func:`inject_noise` makes training data,
:func:`sample_patch_pairs` cuts it into cubes, :func:`train` fits the sparse
U-Net, and :func:`denoise` cleans a whole cloud patch by patch.
"""

from .aggregate import Accumulator, aggregate
from .cloud import BoundingBox, PlyError, PointCloud, bounding_box, read_ply, write_ply
from .metrics import bd_rate, chamfer_distance, d1_psnr, evaluate, hausdorff_psnr
from .net import Checkpoint, NetConfig, UNet, build_unet, infer, one_hot, train
from .noise import NoiseConfig, inject_noise, inject_noise_detailed
from .pipeline import RunConfig, denoise, load_config, sweep_c, training_pairs
from .sampling import (
    Patch,
    PatchPair,
    SamplerConfig,
    extract_cube_patch,
    farthest_point_sample,
    patch_count,
    sample_patch_pairs,
    sample_patches,
)
from .synthetic import multi_plane_cloud

__version__ = "0.1.0"

__all__ = [
    "Accumulator",
    "BoundingBox",
    "Checkpoint",
    "NetConfig",
    "NoiseConfig",
    "Patch",
    "PatchPair",
    "PlyError",
    "PointCloud",
    "RunConfig",
    "SamplerConfig",
    "UNet",
    "aggregate",
    "bd_rate",
    "bounding_box",
    "build_unet",
    "chamfer_distance",
    "d1_psnr",
    "denoise",
    "evaluate",
    "extract_cube_patch",
    "farthest_point_sample",
    "hausdorff_psnr",
    "infer",
    "inject_noise",
    "inject_noise_detailed",
    "load_config",
    "multi_plane_cloud",
    "one_hot",
    "patch_count",
    "read_ply",
    "sample_patch_pairs",
    "sample_patches",
    "sweep_c",
    "train",
    "training_pairs",
    "write_ply",
]
