"""Patch extraction and training-set sampling.

A candidate patch is an even-aligned square RGB window (default 68x68) whose
interior 64x64 region maps onto a 32x32 packed-raw patch (the outer 2-pixel
ring is context consumed by the network's valid convolutions). Candidates are
laid out on a stride-64 grid so their raw footprints do not overlap; the last
row/column is shifted inward (and clamped to even) so every patch fits.

Two samplers build training sets from the candidates:

* random: uniform over candidates, with replacement;
* stratified: each draw picks a color channel uniformly, then a non-empty
  brightness bin uniformly within that channel, then a patch uniformly from
  the bin. This flattens the per-channel brightness distribution of the
  selected population, which is otherwise heavily skewed toward dark values.

Both are deterministic given (dataset, seed); each image consumes an
independent RNG stream derived from (seed, image_id) so parallel and serial
builds agree.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import DatasetError, DimensionError, ParameterError
from .imaging import pack_rggb, RawMosaic
from .io import read_raw_file, read_rgb_png
from .manifest import DatasetManifest

logger = logging.getLogger(__name__)

RGB_PATCH_SIZE = 68
RAW_PATCH_SIZE = 32
PATCH_STRIDE = 64
CONTEXT_SIZE = 128
CONTEXT_CROP_AREA = 0.9
# Side of the training-time random crop: round(128 * sqrt(0.9)) = 121.
CONTEXT_CROP_SIDE = int(round(CONTEXT_SIZE * math.sqrt(CONTEXT_CROP_AREA)))
BRIGHTNESS_BIN_COUNT = 10

INDEX_NAME = "index.json"
INDEX_VERSION = 1


@dataclass
class PatchPair:
    """One aligned training sample."""

    rgb_patch: np.ndarray  # (S, S, 3) float32
    raw_patch: np.ndarray  # ((S-4)/2, (S-4)/2, 4) float32
    context_rgb: np.ndarray  # (128, 128, 3) float32
    source_image_id: str
    patch_origin: tuple[int, int]  # (row, col) in RGB pixels, both even


@dataclass
class BrightnessBins:
    """Per-channel (R, G, B) lists of bins holding candidate indices.

    Bin i covers channel-mean brightness [i/n, (i+1)/n), with 1.0 included
    in the last bin.
    """

    per_channel: list[list[list[int]]]
    bin_count: int

    def nonempty_bins(self, channel: int) -> list[int]:
        return [b for b in range(self.bin_count) if self.per_channel[channel][b]]


def derive_rng(*keys) -> np.random.Generator:
    """Independent RNG stream keyed by a mix of ints and strings."""
    entropy = []
    for k in keys:
        if isinstance(k, str):
            digest = hashlib.sha256(k.encode()).digest()[:8]
            entropy.append(int.from_bytes(digest, "little"))
        else:
            entropy.append(int(k))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def enumerate_patches(
    rgb: np.ndarray,
    packed: np.ndarray | None = None,
    side: int = RGB_PATCH_SIZE,
    stride: int = PATCH_STRIDE,
) -> list[tuple[int, int]]:
    """Grid of even candidate origins; empty (with a warning) if the image is too small."""
    if side % 2 or stride % 2:
        raise ParameterError(f"side and stride must be even, got {side}, {stride}")
    h, w = rgb.shape[:2]
    if packed is not None and (packed.shape[0] * 2 != h - h % 2 or packed.shape[1] * 2 != w - w % 2):
        raise DimensionError(
            f"packed dims {packed.shape[:2]} do not match RGB dims ({h}, {w})"
        )
    if h < side or w < side:
        warnings.warn(f"image {h}x{w} smaller than patch side {side}; no candidates")
        return []

    def axis_origins(extent: int) -> list[int]:
        xs = list(range(0, extent - side + 1, stride))
        tail = extent - side
        tail -= tail % 2
        if xs[-1] != tail:
            xs.append(tail)
        return xs

    return [(r, c) for r in axis_origins(h) for c in axis_origins(w)]


def compute_channel_brightness(rgb_patch: np.ndarray) -> np.ndarray:
    """Arithmetic mean of each color channel, shape (3,)."""
    return rgb_patch.reshape(-1, 3).mean(axis=0, dtype=np.float64)


def channel_brightness_matrix(rgb: np.ndarray, origins, side: int) -> np.ndarray:
    """(N, 3) matrix of per-candidate channel means."""
    out = np.empty((len(origins), 3), dtype=np.float64)
    for i, (r, c) in enumerate(origins):
        out[i] = compute_channel_brightness(rgb[r : r + side, c : c + side])
    return out


def bin_index(value: float, bin_count: int) -> int:
    """Brightness bin of a [0, 1] value; 1.0 falls in the last bin."""
    return min(int(value * bin_count), bin_count - 1)


def build_brightness_bins(brightness: np.ndarray, bin_count: int = BRIGHTNESS_BIN_COUNT) -> BrightnessBins:
    per_channel: list[list[list[int]]] = [
        [[] for _ in range(bin_count)] for _ in range(3)
    ]
    for idx in range(brightness.shape[0]):
        for ch in range(3):
            per_channel[ch][bin_index(brightness[idx, ch], bin_count)].append(idx)
    return BrightnessBins(per_channel=per_channel, bin_count=bin_count)


def stratified_sample_indices(
    bins: BrightnessBins, count: int, rng: np.random.Generator
) -> list[int]:
    """Draw candidate indices channel -> non-empty bin -> patch, all uniform."""
    if not any(bins.nonempty_bins(ch) for ch in range(3)):
        raise DatasetError("stratified sampling requires at least one non-empty bin")
    picks = []
    for _ in range(count):
        ch = int(rng.integers(3))
        nonempty = bins.nonempty_bins(ch)
        b = nonempty[int(rng.integers(len(nonempty)))]
        members = bins.per_channel[ch][b]
        picks.append(members[int(rng.integers(len(members)))])
    return picks


def random_sample_indices(n_candidates: int, count: int, rng: np.random.Generator) -> list[int]:
    """Uniform over candidates, with replacement."""
    if n_candidates == 0:
        raise DatasetError("random sampling requires a non-empty candidate list")
    return [int(i) for i in rng.integers(0, n_candidates, size=count)]


def _resize(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    interp = cv2.INTER_AREA if (h > size or w > size) else cv2.INTER_LINEAR
    return cv2.resize(img, (size, size), interpolation=interp)


def build_context(
    rgb_full: np.ndarray,
    rng: np.random.Generator | None = None,
    crop: bool = False,
) -> np.ndarray:
    """Downscale the full image to 128x128; optionally apply the training crop.

    Training mode (``crop=True``) takes a random crop covering 0.9 of the
    area (side 121) and rescales it back to 128x128. Evaluation mode is the
    plain downscale.
    """
    ctx = _resize(rgb_full.astype(np.float32, copy=False), CONTEXT_SIZE)
    if crop:
        if rng is None:
            raise ParameterError("crop=True requires an RNG")
        ctx = random_context_crop(ctx, rng)
    return np.clip(ctx, 0.0, 1.0)


def random_context_crop(context: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """The 0.9-area random crop + rescale used as training augmentation."""
    span = CONTEXT_SIZE - CONTEXT_CROP_SIDE
    oy = int(rng.integers(0, span + 1))
    ox = int(rng.integers(0, span + 1))
    crop = context[oy : oy + CONTEXT_CROP_SIDE, ox : ox + CONTEXT_CROP_SIDE]
    return cv2.resize(crop, (CONTEXT_SIZE, CONTEXT_SIZE), interpolation=cv2.INTER_LINEAR)


def raw_patch_origin(origin: tuple[int, int]) -> tuple[int, int]:
    """Packed-image origin of the raw patch interior to an RGB patch."""
    r, c = origin
    return (r + 2) // 2, (c + 2) // 2


def extract_pair(
    rgb: np.ndarray,
    packed: np.ndarray,
    origin: tuple[int, int],
    image_id: str,
    context: np.ndarray,
    side: int = RGB_PATCH_SIZE,
) -> PatchPair:
    r, c = origin
    if r % 2 or c % 2:
        raise DimensionError(f"patch origin must be even for Bayer alignment, got {origin}")
    raw_side = (side - 4) // 2
    pr, pc = raw_patch_origin(origin)
    return PatchPair(
        rgb_patch=np.ascontiguousarray(rgb[r : r + side, c : c + side], dtype=np.float32),
        raw_patch=np.ascontiguousarray(packed[pr : pr + raw_side, pc : pc + raw_side], dtype=np.float32),
        context_rgb=context,
        source_image_id=image_id,
        patch_origin=(r, c),
    )


def sample_image_pairs(
    rgb: np.ndarray,
    packed: np.ndarray,
    image_id: str,
    count: int,
    method: str,
    seed: int,
    side: int = RGB_PATCH_SIZE,
    stride: int = PATCH_STRIDE,
    bin_count: int = BRIGHTNESS_BIN_COUNT,
) -> list[PatchPair]:
    """Sample ``count`` patch pairs from one RGB/raw image pair."""
    origins = enumerate_patches(rgb, packed, side=side, stride=stride)
    if not origins:
        return []
    rng = derive_rng(seed, image_id)
    if method == "stratified":
        brightness = channel_brightness_matrix(rgb, origins, side)
        bins = build_brightness_bins(brightness, bin_count)
        picks = stratified_sample_indices(bins, count, rng)
    elif method == "random":
        picks = random_sample_indices(len(origins), count, rng)
    else:
        raise ParameterError(f"unknown sampling method {method!r}")
    context = build_context(rgb, crop=False)
    return [extract_pair(rgb, packed, origins[i], image_id, context, side) for i in picks]


# ---------------------------------------------------------------------------
# On-disk patch dataset: npy shards plus a JSON index.
# ---------------------------------------------------------------------------


def build_patch_dataset(
    manifest: DatasetManifest,
    out_dir: str | Path,
    sampling: str = "stratified",
    patches_per_image: int = 6,
    bin_count: int = BRIGHTNESS_BIN_COUNT,
    seed: int = 0,
    split: str = "train",
    side: int = RGB_PATCH_SIZE,
    stride: int = PATCH_STRIDE,
    shard_size: int = 512,
) -> dict:
    """Sample every image pair in a split and write shards + index.

    Unreadable or missing pairs are recorded under ``skipped`` and skipped;
    an entirely empty result raises :class:`DatasetError`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = manifest.pairs_for_split(split)
    if not pairs:
        raise DatasetError(f"manifest has no pairs in split {split!r}")

    rgb_buf: list[np.ndarray] = []
    raw_buf: list[np.ndarray] = []
    contexts: list[np.ndarray] = []
    image_rows: list[dict] = []
    patch_rows: list[dict] = []
    skipped: list[dict] = []

    for pair in pairs:
        try:
            rgb = read_rgb_png(manifest.rgb_file(pair))
            mosaic = read_raw_file(manifest.raw_file(pair), pair.width, pair.height)
            packed = pack_rggb(RawMosaic(data=mosaic, profile=manifest.sensor)).data
        except Exception as exc:  # noqa: BLE001 - per-image failures are recorded
            logger.warning("skipping %s: %s", pair.image_id, exc)
            skipped.append({"image_id": pair.image_id, "reason": str(exc)})
            continue
        samples = sample_image_pairs(
            rgb, packed, pair.image_id, patches_per_image, sampling, seed,
            side=side, stride=stride, bin_count=bin_count,
        )
        if not samples:
            skipped.append({"image_id": pair.image_id, "reason": "image smaller than patch"})
            continue
        context_row = len(contexts)
        contexts.append(samples[0].context_rgb)
        image_rows.append({"image_id": pair.image_id, "context_row": context_row})
        for s in samples:
            patch_rows.append(
                {
                    "image_id": s.source_image_id,
                    "origin": [int(s.patch_origin[0]), int(s.patch_origin[1])],
                    "context_row": context_row,
                }
            )
            rgb_buf.append(s.rgb_patch)
            raw_buf.append(s.raw_patch)

    if not patch_rows:
        raise DatasetError("no patches produced: every input pair was skipped")

    shards = []
    for start in range(0, len(rgb_buf), shard_size):
        stop = min(start + shard_size, len(rgb_buf))
        name = f"shard-{len(shards):04d}"
        np.save(out_dir / f"{name}_rgb.npy", np.stack(rgb_buf[start:stop]))
        np.save(out_dir / f"{name}_raw.npy", np.stack(raw_buf[start:stop]))
        shards.append({"name": name, "count": stop - start})
    np.save(out_dir / "contexts.npy", np.stack(contexts))

    for i, row in enumerate(patch_rows):
        row["shard"] = i // shard_size
        row["row"] = i % shard_size

    index = {
        "version": INDEX_VERSION,
        "sampling": sampling,
        "seed": int(seed),
        "bins": int(bin_count),
        "split": split,
        "rgb_patch_size": int(side),
        "raw_patch_size": int((side - 4) // 2),
        "context_size": CONTEXT_SIZE,
        "stride": int(stride),
        "sensor": manifest.sensor.to_dict(),
        "images": image_rows,
        "patches": patch_rows,
        "shards": shards,
        "skipped": skipped,
    }
    with open(out_dir / INDEX_NAME, "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return index


class PatchDataset:
    """In-memory view of a patch dataset directory."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            with open(self.path / INDEX_NAME) as fh:
                self.index = json.load(fh)
        except OSError as exc:
            raise DatasetError(f"cannot read patch dataset at {self.path}: {exc}") from exc
        if self.index.get("version") != INDEX_VERSION:
            raise DatasetError(f"unsupported patch dataset version in {self.path}")
        rgb_parts, raw_parts = [], []
        for shard in self.index["shards"]:
            rgb_parts.append(np.load(self.path / f"{shard['name']}_rgb.npy"))
            raw_parts.append(np.load(self.path / f"{shard['name']}_raw.npy"))
        self.rgb_patches = np.concatenate(rgb_parts) if rgb_parts else np.empty((0,))
        self.raw_patches = np.concatenate(raw_parts) if raw_parts else np.empty((0,))
        self.contexts = np.load(self.path / "contexts.npy")
        self.context_rows = np.array([p["context_row"] for p in self.index["patches"]])
        if len(self.rgb_patches) != len(self.index["patches"]):
            raise DatasetError(f"index/shard mismatch in {self.path}")

    def __len__(self) -> int:
        return len(self.index["patches"])

    def __getitem__(self, i: int) -> PatchPair:
        row = self.index["patches"][i]
        return PatchPair(
            rgb_patch=self.rgb_patches[i],
            raw_patch=self.raw_patches[i],
            context_rgb=self.contexts[row["context_row"]],
            source_image_id=row["image_id"],
            patch_origin=tuple(row["origin"]),
        )


def histogram_entropy(values: np.ndarray, bins: int = BRIGHTNESS_BIN_COUNT) -> float:
    """Shannon entropy (nats) of a histogram of [0, 1] values."""
    counts, _ = np.histogram(values, bins=bins, range=(0.0, 1.0))
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())
