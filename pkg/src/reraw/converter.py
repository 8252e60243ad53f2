"""Full-image RGB -> packed raw conversion by sliding the model over tiles.

Because every output pixel of the model has a 4x4 receptive field in the
RGB input, converting an image tile-by-tile is exactly equivalent to one
monolithic pass: the image is padded by a 1-pixel reflective ring, cut into
66x66 inputs at stride 64, and each tile's 32x32x4 output is placed without
overlap. The context vector is computed once per image from the plain
128x128 downscale (no training-time crop).

Odd image dimensions are cropped (not padded) to even on the right/bottom
to preserve Bayer phase; the crop is recorded in the conversion report.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import InputError
from .imaging import PackedRawImage, RawMosaic, SensorProfile, unpack_rggb
from .io import read_rgb_png, write_raw_file
from .model import ReRawModel, checkpoint_hash, load_checkpoint
from .sampling import build_context

logger = logging.getLogger(__name__)

TILE_FOOTPRINT = 64  # RGB pixels covered by one output tile
TILE_INPUT = 66  # footprint + 1-pixel context ring on each side
RAW_TILE = 32
CONVERSION_MANIFEST = "conversion_manifest.json"


def _tile_origins(extent: int) -> list[int]:
    """Output-tile origins along one axis of the half-resolution grid."""
    xs = list(range(0, extent - RAW_TILE + 1, RAW_TILE))
    if xs[-1] + RAW_TILE < extent:
        xs.append(extent - RAW_TILE)
    return xs


def convert_image(
    model: ReRawModel,
    rgb: np.ndarray,
    batch_size: int = 16,
    context: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Convert one RGB image; returns (packed (H/2, W/2, 4) float32, info).

    ``context`` overrides the per-image 128x128 context (used when a crop of
    a larger image should be converted under the original image's context).
    """
    h, w = rgb.shape[:2]
    hc, wc = h - h % 2, w - w % 2
    if min(hc, wc) < TILE_FOOTPRINT:
        raise InputError(
            f"image {h}x{w} is smaller than one {TILE_FOOTPRINT}px tile footprint"
        )
    rgb = np.ascontiguousarray(rgb[:hc, :wc], dtype=np.float32)

    if context is None:
        context = build_context(rgb, crop=False)
    ctx_t = torch.from_numpy(np.ascontiguousarray(context)).permute(2, 0, 1).unsqueeze(0)

    padded = np.pad(rgb, ((1, 1), (1, 1), (0, 0)), mode="reflect")
    out = np.empty((hc // 2, wc // 2, 4), dtype=np.float32)
    origins = [(oy, ox) for oy in _tile_origins(hc // 2) for ox in _tile_origins(wc // 2)]

    model.eval()
    with torch.no_grad():
        ctx_vec, alpha = model.context_features(ctx_t)
        for start in range(0, len(origins), batch_size):
            chunk = origins[start : start + batch_size]
            tiles = np.stack(
                [padded[2 * oy : 2 * oy + TILE_INPUT, 2 * ox : 2 * ox + TILE_INPUT] for oy, ox in chunk]
            )
            tiles_t = torch.from_numpy(tiles).permute(0, 3, 1, 2).contiguous()
            ctx_rep = None if ctx_vec is None else ctx_vec.expand(len(chunk), -1)
            final, _, _ = model.predict_from_features(
                tiles_t, ctx_rep, alpha.expand(len(chunk), -1)
            )
            final_np = final.permute(0, 2, 3, 1).numpy()
            for (oy, ox), tile_out in zip(chunk, final_np):
                out[oy : oy + RAW_TILE, ox : ox + RAW_TILE] = tile_out

    info = {"width": wc, "height": hc, "cropped": (hc != h or wc != w)}
    return out, info


@dataclass
class ConversionEntry:
    image_id: str
    source: str
    output: str
    width: int
    height: int
    seconds: float
    cropped: bool


@dataclass
class ConversionReport:
    """Outcome of a batch conversion: per-image entries, skips, and timing."""

    checkpoint: str
    checkpoint_sha: str
    sensor: dict
    entries: list[ConversionEntry] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "checkpoint": self.checkpoint,
            "checkpoint_sha": self.checkpoint_sha,
            "sensor": self.sensor,
            "entries": [asdict(e) for e in self.entries],
            "skipped": self.skipped,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def convert_batch(
    checkpoint_path: str | Path,
    inputs: list[tuple[str, str | Path]],
    out_dir: str | Path,
    profile: SensorProfile,
    batch_size: int = 16,
) -> ConversionReport:
    """Convert (image_id, rgb_path) pairs to 16-bit raw mosaics + manifest.

    Per-image failures are recorded under ``skipped`` and do not abort the
    batch. Honors the ``RERAW_WORKERS`` environment variable for parallel
    image-level conversion (outputs are per-image files, so ordering is
    irrelevant).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, _ = load_checkpoint(checkpoint_path)
    report = ConversionReport(
        checkpoint=str(checkpoint_path),
        checkpoint_sha=checkpoint_hash(checkpoint_path),
        sensor=profile.to_dict(),
    )

    def convert_one(item):
        image_id, rgb_path = item
        start = time.perf_counter()
        rgb = read_rgb_png(rgb_path)
        packed, info = convert_image(model, rgb, batch_size=batch_size)
        mosaic = unpack_rggb(PackedRawImage(data=packed, profile=profile))
        out_path = out_dir / f"{image_id}.raw"
        write_raw_file(out_path, mosaic.data)
        return ConversionEntry(
            image_id=image_id,
            source=str(rgb_path),
            output=out_path.name,
            width=info["width"],
            height=info["height"],
            seconds=round(time.perf_counter() - start, 4),
            cropped=info["cropped"],
        )

    workers = max(1, int(os.environ.get("RERAW_WORKERS", "1")))
    if workers == 1:
        results = []
        for item in inputs:
            try:
                results.append((item, convert_one(item), None))
            except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                results.append((item, None, exc))
    else:
        def safe(item):
            try:
                return item, convert_one(item), None
            except Exception as exc:  # noqa: BLE001
                return item, None, exc

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(safe, inputs))

    for (image_id, rgb_path), entry, exc in results:
        if exc is None:
            report.entries.append(entry)
        else:
            logger.warning("skipping %s: %s", image_id, exc)
            report.skipped.append({"image_id": image_id, "source": str(rgb_path), "reason": str(exc)})

    report.entries.sort(key=lambda e: e.image_id)
    report.save(out_dir / CONVERSION_MANIFEST)
    return report


def load_conversion_report(path: str | Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / CONVERSION_MANIFEST
    with open(path) as fh:
        return json.load(fh)


def export_mosaic(packed: np.ndarray, profile: SensorProfile, path: str | Path) -> RawMosaic:
    """Denormalize a packed prediction and write it as a 16-bit raw file."""
    mosaic = unpack_rggb(PackedRawImage(data=packed, profile=profile))
    write_raw_file(path, mosaic.data)
    return mosaic
