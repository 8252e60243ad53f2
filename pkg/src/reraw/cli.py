"""Command line interface.

Subcommands: ``synth`` (make a synthetic paired dataset), ``prepare``
(sample a patch training set), ``train``, ``convert``, ``evaluate``, and
``stats`` (sampling-distribution histograms). Exit codes: 0 success, 2 for
input problems, 3 for config/invariant violations.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    DimensionError,
    InputError,
    ParameterError,
    ReRawError,
    ShapeError,
    ValueRangeError,
)
from .imaging import RawMosaic, SensorProfile, pack_rggb
from .io import read_raw_file
from .manifest import load_manifest
from .model import default_gamma_ladder
from .sampling import (
    PatchDataset,
    build_patch_dataset,
    channel_brightness_matrix,
    enumerate_patches,
    histogram_entropy,
)
from .trainer import TrainConfig, train

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3

logger = logging.getLogger("reraw")


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic RGB/raw paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--size", type=int, default=192)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dark-bias", type=float, default=2.5)
    p.add_argument("--black-level", type=int, default=64)
    p.add_argument("--white-level", type=int, default=1023)
    p.add_argument("--test-fraction", type=float, default=0.2)


def _add_prepare(sub):
    p = sub.add_parser("prepare", help="build a patch dataset from an image-pair manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sampling", choices=["random", "stratified"], default="stratified")
    p.add_argument("--patches-per-image", type=int, default=6)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train")
    p.add_argument("--patch-size", type=int, default=68)
    p.add_argument("--stride", type=int, default=64)


def _add_train(sub):
    p = sub.add_parser("train", help="train a conversion model on a patch dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="YAML training config; flags below override it")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--restart-period", type=int)
    p.add_argument("--lr-start", type=float)
    p.add_argument("--lr-floor", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--loss", choices=["l1", "l2", "hln"])
    p.add_argument("--heads", type=int)
    p.add_argument("--no-context", action="store_true")
    p.add_argument("--no-scaling", action="store_true")
    p.add_argument("--trunk-width", type=int)
    p.add_argument("--stem-channels", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--encoder-width", type=int)
    p.add_argument("--encoder-blocks", type=int)
    p.add_argument("--resume")


def _add_convert(sub):
    p = sub.add_parser("convert", help="convert RGB images to raw with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="dataset manifest supplying images and sensor profile")
    p.add_argument("--split", default="test")
    p.add_argument("--images", nargs="*", help="explicit PNG paths (requires sensor flags)")
    p.add_argument("--sensor-name", default="unknown")
    p.add_argument("--black-level", type=int)
    p.add_argument("--white-level", type=int)


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="PSNR/SSIM of converted raw vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)


def _add_stats(sub):
    p = sub.add_parser("stats", help="pixel/brightness histograms of patch datasets")
    p.add_argument("--manifest", required=True, help="source pairs, for the full-population reference")
    p.add_argument("--datasets", nargs="+", required=True, help="patch dataset directories")
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=50)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reraw", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_prepare(sub)
    _add_train(sub)
    _add_convert(sub)
    _add_evaluate(sub)
    _add_stats(sub)
    return parser


def cmd_synth(args) -> int:
    from .synthetic import generate_dataset

    profile = SensorProfile(
        name="synthcam", black_level=args.black_level, white_level=args.white_level
    )
    path = generate_dataset(
        args.out,
        count=args.count,
        size=args.size,
        profile=profile,
        seed=args.seed,
        dark_bias=args.dark_bias,
        test_fraction=args.test_fraction,
    )
    print(f"wrote {args.count} pairs, manifest at {path}")
    return EXIT_OK


def cmd_prepare(args) -> int:
    manifest = load_manifest(args.manifest)
    index = build_patch_dataset(
        manifest,
        args.out,
        sampling=args.sampling,
        patches_per_image=args.patches_per_image,
        bin_count=args.bins,
        seed=args.seed,
        split=args.split,
        side=args.patch_size,
        stride=args.stride,
    )
    print(
        f"{len(index['patches'])} patches from {len(index['images'])} images "
        f"({args.sampling}, seed {args.seed}); {len(index['skipped'])} skipped"
    )
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    cfg = (TrainConfig.from_yaml(args.config) if args.config else TrainConfig()).to_dict()
    for key, value in [
        ("epochs", args.epochs),
        ("batch_size", args.batch_size),
        ("restart_period_epochs", args.restart_period),
        ("lr_start", args.lr_start),
        ("lr_floor", args.lr_floor),
        ("seed", args.seed),
    ]:
        if value is not None:
            cfg[key] = value
    model = cfg["model"]
    for key, value in [
        ("n_heads", args.heads),
        ("trunk_width", args.trunk_width),
        ("stem_channels", args.stem_channels),
        ("n_residual_blocks", args.blocks),
        ("encoder_width", args.encoder_width),
        ("encoder_blocks", args.encoder_blocks),
    ]:
        if value is not None:
            model[key] = value
    if args.heads is not None:
        model["gammas"] = list(default_gamma_ladder(args.heads))
    if args.trunk_width is not None:
        model["context_dim"] = args.trunk_width
    if args.no_context:
        model["use_context_encoder"] = False
    if args.no_scaling:
        model["use_scaling_encoder"] = False
    if args.loss is not None:
        cfg["loss"]["kind"] = args.loss
    return TrainConfig.from_dict(cfg)


def cmd_train(args) -> int:
    cfg = _train_config(args)
    dataset = PatchDataset(args.dataset)
    result = train(dataset, cfg, args.out, resume_from=args.resume)
    print(f"final validation loss: {result.final_val_loss:.6f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_convert(args) -> int:
    from .converter import convert_batch

    if args.manifest:
        manifest = load_manifest(args.manifest)
        profile = manifest.sensor
        pairs = manifest.pairs_for_split(args.split)
        if not pairs:
            raise InputError(f"manifest has no pairs in split {args.split!r}")
        inputs = [(p.image_id, manifest.rgb_file(p)) for p in pairs]
    elif args.images:
        if args.black_level is None or args.white_level is None:
            raise InputError("--images requires --black-level and --white-level")
        profile = SensorProfile(
            name=args.sensor_name, black_level=args.black_level, white_level=args.white_level
        )
        inputs = [(Path(p).stem, p) for p in args.images]
    else:
        raise InputError("convert needs either --manifest or --images")
    report = convert_batch(args.checkpoint, inputs, args.out, profile)
    print(f"converted {len(report.entries)} images, skipped {len(report.skipped)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .metrics import evaluate_dataset

    manifest = load_manifest(args.manifest)
    report = evaluate_dataset(args.pred, manifest, split=args.split, out_dir=args.out)
    print(f"{len(report.rows)} images: mean PSNR {report.mean_psnr:.4f} dB, mean SSIM {report.mean_ssim:.6f}")
    return EXIT_OK


def _merged_green(packed_pixels: np.ndarray) -> dict[str, np.ndarray]:
    return {
        "R": packed_pixels[..., 0].ravel(),
        "G": np.concatenate([packed_pixels[..., 1].ravel(), packed_pixels[..., 2].ravel()]),
        "B": packed_pixels[..., 3].ravel(),
    }


def cmd_stats(args) -> int:
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    # Full-population reference: every packed pixel and every candidate
    # patch's channel means across the split.
    full_pixels = []
    full_means = []
    for pair in manifest.pairs_for_split(args.split):
        from .io import read_rgb_png

        mosaic = read_raw_file(manifest.raw_file(pair), pair.width, pair.height)
        packed = pack_rggb(RawMosaic(data=mosaic, profile=manifest.sensor)).data
        rgb = read_rgb_png(manifest.rgb_file(pair))
        origins = enumerate_patches(rgb, packed)
        if origins:
            full_means.append(channel_brightness_matrix(rgb, origins, 68))
        full_pixels.append(packed.reshape(-1, 4))
    if not full_pixels:
        raise DatasetError("manifest split is empty")
    full_pixels = np.concatenate(full_pixels)
    full_means = np.concatenate(full_means) if full_means else np.zeros((0, 3))

    def population_stats(pixels_by_ch: dict, means: np.ndarray) -> dict:
        return {
            "raw_pixel_entropy": {ch: histogram_entropy(v, bins=args.bins) for ch, v in pixels_by_ch.items()},
            "rgb_patch_mean_entropy": {
                ch: histogram_entropy(means[:, i], bins=10) for i, ch in enumerate("RGB")
            },
        }

    stats = {"full": population_stats(_merged_green(full_pixels), full_means), "datasets": {}}
    curves = {"full": _merged_green(full_pixels)}
    for ds_path in args.datasets:
        ds = PatchDataset(ds_path)
        label = f"{ds.index['sampling']}:{Path(ds_path).name}"
        pixels = _merged_green(ds.raw_patches.reshape(-1, 4))
        means = ds.rgb_patches.reshape(len(ds), -1, 3).mean(axis=1)
        stats["datasets"][label] = population_stats(pixels, means)
        stats["datasets"][label]["sampling"] = ds.index["sampling"]
        curves[label] = pixels

    with open(out_dir / "stats.json", "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _plot_histograms(curves, out_dir / "histograms.png", bins=args.bins)
    print(f"wrote {out_dir / 'stats.json'}")
    return EXIT_OK


def _plot_histograms(curves: dict, path: Path, bins: int) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(14, 4), sharey=True)
    for ax, ch in zip(axes, "RGB"):
        for label, pixels in curves.items():
            hist, edges = np.histogram(pixels[ch], bins=bins, range=(0.0, 1.0), density=True)
            ax.step(edges[:-1], hist, where="post", label=label)
        ax.set_title(f"{ch} channel")
        ax.set_xlabel("normalized raw value")
        ax.set_yscale("log")
    axes[0].set_ylabel("density")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


_HANDLERS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "convert": cmd_convert,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
}

_CONFIG_ERRORS = (ConfigError, ParameterError, ShapeError, DimensionError, ValueRangeError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _HANDLERS[args.command](args)
    except _CONFIG_ERRORS as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG
    except (InputError, DatasetError, CheckpointError, ReRawError, OSError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
