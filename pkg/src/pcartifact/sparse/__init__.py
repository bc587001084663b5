"""Sparse voxel tensors, sparse 3D convolutions and reverse-mode training."""

from .autograd import Tape, Var, gather_rows, sum_all
from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .ops import (
    BLOCK_OFFSETS,
    SUBM_OFFSETS,
    ConvKernel,
    concat_features,
    instance_norm,
    relu,
    slice_features,
    strided_conv,
    submanifold_conv,
    transposed_conv,
)
from .optim import AdamState, adam_step
from .tensor import CoordMap, SparseTensor, build_sparse_tensor

__all__ = [
    "AdamState",
    "BLOCK_OFFSETS",
    "CheckpointError",
    "ConvKernel",
    "CoordMap",
    "SUBM_OFFSETS",
    "SparseTensor",
    "Tape",
    "Var",
    "adam_step",
    "build_sparse_tensor",
    "concat_features",
    "gather_rows",
    "instance_norm",
    "read_checkpoint",
    "relu",
    "slice_features",
    "strided_conv",
    "submanifold_conv",
    "sum_all",
    "transposed_conv",
    "write_checkpoint",
]
