"""RGB-to-RAW conversion toolkit.

Builds stratified-sampled RGB/raw patch datasets, trains a gamma-space
multi-head conversion network, converts full RGB images to packed-RGGB raw
by tiled inference, and evaluates reconstruction with PSNR/SSIM.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .imaging import (
    PackedRawImage,
    RawMosaic,
    RgbImage,
    SensorProfile,
    degamma,
    gamma_correct,
    pack_rggb,
    unpack_rggb,
)
from .model import ReRawConfig, ReRawModel, compose_raw, load_checkpoint, save_checkpoint
from .objective import LossConfig, composite_loss, hard_log_loss, make_gamma_targets
from .sampling import PatchDataset, PatchPair, build_patch_dataset
from .trainer import TrainConfig, lr_schedule, train

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "LossConfig",
    "PackedRawImage",
    "PatchDataset",
    "PatchPair",
    "RawMosaic",
    "ReRawConfig",
    "ReRawModel",
    "RgbImage",
    "SensorProfile",
    "TrainConfig",
    "build_patch_dataset",
    "compose_raw",
    "composite_loss",
    "degamma",
    "gamma_correct",
    "hard_log_loss",
    "lr_schedule",
    "load_checkpoint",
    "make_gamma_targets",
    "pack_rggb",
    "save_checkpoint",
    "train",
    "unpack_rggb",
]
