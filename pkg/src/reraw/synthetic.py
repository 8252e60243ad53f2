"""Synthetic RGB/raw pair generator for tests and demos.

This is a test fixture, not a camera model: scenes are random smooth fields
with a dark-skewed value distribution plus a few bright discs, and the
"ISP" producing the RGB side is deliberately simple — packed-raw
normalization, bilinear demosaic, per-channel white-balance gains, and a
display gamma. The learned converter's job is to invert exactly this chain,
which makes the fixture a well-posed end-to-end sanity check at desk scale.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
from scipy.ndimage import convolve

from .imaging import SensorProfile, crop_to_even
from .io import write_raw_file, write_rgb_png
from .manifest import DatasetManifest, PairRecord, assign_splits, save_manifest
from .sampling import derive_rng

DEFAULT_PROFILE = SensorProfile(name="synthcam", black_level=64, white_level=1023)
WB_GAINS = (2.0, 1.0, 1.6)  # red, green, blue
DISPLAY_GAMMA = 2.2

_KERNEL_G = np.array([[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]]) / 4.0
_KERNEL_RB = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 4.0


def _bayer_masks(h: int, w: int) -> np.ndarray:
    """(3, H, W) masks of the R/G/B sites of an RGGB mosaic."""
    masks = np.zeros((3, h, w), dtype=np.float64)
    masks[0, 0::2, 0::2] = 1.0
    masks[1, 0::2, 1::2] = 1.0
    masks[1, 1::2, 0::2] = 1.0
    masks[2, 1::2, 1::2] = 1.0
    return masks


def bilinear_demosaic(mosaic_norm: np.ndarray) -> np.ndarray:
    """Normalized-convolution bilinear demosaic of an RGGB mosaic in [0, 1]."""
    h, w = mosaic_norm.shape
    masks = _bayer_masks(h, w)
    out = np.empty((h, w, 3), dtype=np.float64)
    for c, kernel in ((0, _KERNEL_RB), (1, _KERNEL_G), (2, _KERNEL_RB)):
        sparse = mosaic_norm * masks[c]
        num = convolve(sparse, kernel, mode="mirror")
        den = convolve(masks[c], kernel, mode="mirror")
        out[..., c] = num / den
    return out


def forward_isp(mosaic_norm: np.ndarray) -> np.ndarray:
    """Raw mosaic (normalized) -> display RGB: demosaic, white balance, gamma."""
    rgb = bilinear_demosaic(mosaic_norm)
    rgb *= np.asarray(WB_GAINS)
    np.clip(rgb, 0.0, 1.0, out=rgb)
    rgb **= 1.0 / DISPLAY_GAMMA
    return rgb.astype(np.float32)


def _smooth_field(rng: np.random.Generator, h: int, w: int, cells: int = 12) -> np.ndarray:
    low = rng.random((cells, cells))
    field = cv2.resize(low, (w, h), interpolation=cv2.INTER_CUBIC)
    field -= field.min()
    peak = field.max()
    return field / peak if peak > 0 else field


def make_scene(rng: np.random.Generator, h: int, w: int, dark_bias: float = 2.5) -> np.ndarray:
    """Linear scene RGB in [0, 1]: dark-skewed base plus sparse bright discs.

    ``dark_bias`` is the exponent applied to the base field; higher values
    push more of the image toward black, mimicking nighttime raw statistics.
    """
    base = _smooth_field(rng, h, w) ** dark_bias * 0.35
    tint = 0.7 + 0.6 * rng.random(3)
    scene = base[..., None] * tint
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.integers(0, h), rng.integers(0, w)
        radius = float(rng.integers(max(4, h // 24), max(6, h // 8)))
        brightness = 0.7 + 0.3 * rng.random()
        color = 0.6 + 0.4 * rng.random(3)
        dist2 = (yy - cy) ** 2 + (xx - cx) ** 2
        disc = brightness * np.exp(-dist2 / (2 * (radius / 2) ** 2))
        scene = scene + disc[..., None] * color
    return np.clip(scene, 0.0, 1.0)


def scene_to_mosaic(scene: np.ndarray, profile: SensorProfile) -> np.ndarray:
    """Mosaic the linear scene onto an RGGB grid with inverse WB applied."""
    h, w = scene.shape[:2]
    cam = scene / np.asarray(WB_GAINS)
    masks = _bayer_masks(h, w)
    flat = cam[..., 0] * masks[0] + cam[..., 1] * masks[1] + cam[..., 2] * masks[2]
    span = profile.white_level - profile.black_level
    adu = np.rint(flat * span + profile.black_level)
    return np.clip(adu, 0, profile.white_level).astype(np.uint16)


def synthesize_pair(rng: np.random.Generator, profile: SensorProfile, h: int, w: int, dark_bias: float):
    """One (mosaic uint16, display RGB float32) pair."""
    scene = make_scene(rng, h, w, dark_bias)
    mosaic = scene_to_mosaic(scene, profile)
    norm = (mosaic.astype(np.float64) - profile.black_level) / (profile.white_level - profile.black_level)
    rgb = forward_isp(np.clip(norm, 0.0, 1.0))
    return mosaic, rgb


def generate_dataset(
    out_dir: str | Path,
    count: int,
    size: int = 192,
    profile: SensorProfile = DEFAULT_PROFILE,
    seed: int = 0,
    dark_bias: float = 2.5,
    test_fraction: float = 0.2,
) -> Path:
    """Write a paired dataset (PNG + raw + manifest); returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "raw").mkdir(parents=True, exist_ok=True)
    size = size - size % 2
    ids = [f"synth_{i:05d}" for i in range(count)]
    splits = assign_splits(ids, seed=seed, test_fraction=test_fraction)
    pairs = []
    for image_id in ids:
        rng = derive_rng(seed, image_id)
        mosaic, rgb = synthesize_pair(rng, profile, size, size, dark_bias)
        rgb = crop_to_even(rgb)
        write_raw_file(out_dir / "raw" / f"{image_id}.raw", mosaic)
        write_rgb_png(out_dir / "images" / f"{image_id}.png", rgb, bit_depth=8)
        pairs.append(
            PairRecord(
                image_id=image_id,
                rgb_path=f"images/{image_id}.png",
                raw_path=f"raw/{image_id}.raw",
                width=size,
                height=size,
                split=splits[image_id],
            )
        )
    manifest = DatasetManifest(sensor=profile, pairs=pairs, split_seed=seed, root=out_dir)
    path = out_dir / "manifest.yaml"
    save_manifest(manifest, path)
    return path
