"""Reconstruction quality metrics on packed raw images.

PSNR and SSIM are computed on the 4-channel packed representation in
normalized [0, 1] space (unit peak). SSIM uses the standard 11-tap Gaussian
window (sigma 1.5) with stabilizers C1 = 0.01^2 and C2 = 0.03^2, evaluated
per channel and averaged; the filtered maps are cropped by the window
radius before averaging so boundary handling does not leak into the score.
Dataset-level numbers are unweighted arithmetic means of the per-image
values (dB values averaged directly, not via mean MSE).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .converter import load_conversion_report
from .errors import DatasetError, ShapeError
from .imaging import RawMosaic, pack_rggb
from .io import read_raw_file
from .manifest import DatasetManifest

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """10*log10(1/MSE) at unit peak; +inf for identical arrays."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    mse = float(np.mean((pred.astype(np.float64) - target.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _ssim_single(pred: np.ndarray, target: np.ndarray, win_size: int) -> float:
    radius = (win_size - 1) // 2
    # truncate chosen so gaussian_filter keeps exactly `radius` taps per side
    truncate = (radius + 0.5) / SSIM_SIGMA - 1e-9

    def blur(x):
        return gaussian_filter(x, sigma=SSIM_SIGMA, truncate=truncate)

    x = pred.astype(np.float64)
    y = target.astype(np.float64)
    ux, uy = blur(x), blur(y)
    uxx, uyy, uxy = blur(x * x), blur(y * y), blur(x * y)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    score = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux**2 + uy**2 + c1) * (vx + vy + c2))
    interior = score[radius : score.shape[0] - radius, radius : score.shape[1] - radius]
    return float(interior.mean())


def ssim(pred: np.ndarray, target: np.ndarray, win_size: int = SSIM_WINDOW) -> float:
    """Mean structural similarity; symmetric, 1.0 iff the inputs are identical."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    min_side = min(pred.shape[0], pred.shape[1])
    if min_side < win_size:
        win_size = min_side if min_side % 2 else min_side - 1
        warnings.warn(f"image smaller than SSIM window; shrinking window to {win_size}")
        if win_size < 3:
            raise ShapeError(f"image too small for SSIM, min side {min_side}")
    if pred.ndim == 2:
        return _ssim_single(pred, target, win_size)
    scores = [_ssim_single(pred[..., c], target[..., c], win_size) for c in range(pred.shape[2])]
    return float(np.mean(scores))


@dataclass
class ImageScore:
    image_id: str
    psnr_db: float
    ssim: float


@dataclass
class EvaluationReport:
    """Per-image and dataset-averaged PSNR/SSIM."""

    rows: list[ImageScore] = field(default_factory=list)
    unpaired: list[dict] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr_db for r in self.rows])) if self.rows else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.rows])) if self.rows else math.nan

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "psnr_db", "ssim"])
            for r in self.rows:
                writer.writerow([r.image_id, f"{r.psnr_db:.6f}", f"{r.ssim:.6f}"])
            writer.writerow(["mean", f"{self.mean_psnr:.6f}", f"{self.mean_ssim:.6f}"])


def _pred_raw_index(pred_dir: Path) -> dict[str, Path]:
    """Map image_id -> raw file, via the conversion manifest when present."""
    manifest_path = pred_dir / "conversion_manifest.json"
    if manifest_path.exists():
        doc = load_conversion_report(manifest_path)
        return {e["image_id"]: pred_dir / e["output"] for e in doc["entries"]}
    return {p.stem: p for p in sorted(pred_dir.glob("*.raw"))}


def evaluate_dataset(
    pred_dir: str | Path,
    target_manifest: DatasetManifest,
    split: str | None = "test",
    out_dir: str | Path | None = None,
) -> EvaluationReport:
    """Score a directory of converted raw files against ground truth.

    Files pair by image id; unpaired entries on either side are recorded and
    excluded with a warning. Writes ``metrics.csv`` and a per-image PSNR
    histogram when ``out_dir`` is given.
    """
    pred_dir = Path(pred_dir)
    preds = _pred_raw_index(pred_dir)
    report = EvaluationReport()
    targets = {p.image_id: p for p in target_manifest.pairs_for_split(split)}
    for image_id in sorted(targets):
        if image_id not in preds:
            warnings.warn(f"no prediction for {image_id}; excluded")
            report.unpaired.append({"image_id": image_id, "side": "prediction"})
            continue
        pair = targets[image_id]
        gt_mosaic = read_raw_file(target_manifest.raw_file(pair), pair.width, pair.height)
        pred_mosaic = read_raw_file(preds[image_id], pair.width, pair.height)
        gt = pack_rggb(RawMosaic(data=gt_mosaic, profile=target_manifest.sensor)).data
        pr = pack_rggb(RawMosaic(data=pred_mosaic, profile=target_manifest.sensor)).data
        report.rows.append(ImageScore(image_id=image_id, psnr_db=psnr(pr, gt), ssim=ssim(pr, gt)))
    for image_id in sorted(set(preds) - set(targets)):
        warnings.warn(f"prediction {image_id} has no ground truth; excluded")
        report.unpaired.append({"image_id": image_id, "side": "target"})
    if not report.rows and not report.unpaired:
        raise DatasetError(f"nothing to evaluate in {pred_dir}")

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.write_csv(out_dir / "metrics.csv")
        _plot_psnr_histogram(report, out_dir / "psnr_hist.png")
    return report


def _plot_psnr_histogram(report: EvaluationReport, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    finite = [r.psnr_db for r in report.rows if math.isfinite(r.psnr_db)]
    fig, ax = plt.subplots(figsize=(6, 4))
    if finite:
        ax.hist(finite, bins=20, color="steelblue", edgecolor="black")
    ax.set_xlabel("PSNR (dB)")
    ax.set_ylabel("images")
    ax.set_title("Per-image reconstruction PSNR")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
