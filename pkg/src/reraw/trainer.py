"""Optimization loop: Adam + cosine annealing with warm restarts.

The learning rate decays from ``lr_start`` to ``lr_floor`` with a cosine
profile inside each restart window (default 16 epochs) and snaps back to
``lr_start`` at every window boundary. Checkpoints are written at each
boundary and at the end; metrics stream to an append-only CSV with columns
``step, epoch, lr, train_loss, val_loss`` (val_loss filled on epoch-end
rows).

All stochasticity (weight init, epoch shuffles, context-crop augmentation)
is derived functionally from (seed, epoch), so resuming from a boundary
checkpoint replays the exact batch sequence.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml

from .errors import CheckpointError, ConfigError, DatasetError, TrainingDivergedError
from .model import ReRawConfig, ReRawModel, center_crop, save_checkpoint
from .objective import LossConfig, composite_loss, make_gamma_targets, resolve_loss
from .sampling import PatchDataset, derive_rng, random_context_crop

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 128
    restart_period_epochs: int = 16
    lr_start: float = 1e-3
    lr_floor: float = 1e-5
    seed: int = 0
    grad_clip: float | None = None
    val_fraction: float = 0.05
    loss: LossConfig = field(default_factory=LossConfig)
    model: ReRawConfig = field(default_factory=ReRawConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.restart_period_epochs < 1 or self.epochs % self.restart_period_epochs:
            raise ConfigError(
                f"epochs ({self.epochs}) must be divisible by restart_period_epochs "
                f"({self.restart_period_epochs})"
            )
        if not self.lr_floor < self.lr_start:
            raise ConfigError(f"need lr_floor < lr_start, got {self.lr_floor} >= {self.lr_start}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = asdict(self.loss)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            d["loss"] = LossConfig(**d["loss"])
        if isinstance(d.get("model"), dict):
            d["model"] = ReRawConfig.from_dict(d["model"])
        return cls(**d)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "TrainConfig":
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{path} is not a mapping")
        return cls.from_dict(doc)

    def to_yaml(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


def lr_schedule(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """Cosine decay lr_start -> lr_floor inside each restart window."""
    window = cfg.restart_period_epochs * steps_per_epoch
    t = (step % window) / window
    return cfg.lr_floor + 0.5 * (cfg.lr_start - cfg.lr_floor) * (1.0 + math.cos(math.pi * t))


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    final_val_loss: float
    epoch_val_losses: list[float]
    epoch_train_losses: list[float]


def _stack_patches(arr: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(arr)).permute(0, 3, 1, 2).contiguous()


def training_tensors(dataset: PatchDataset):
    """Dataset arrays -> (network-input patches, raw targets, contexts, context rows)."""
    rgb = _stack_patches(dataset.rgb_patches.astype(np.float32))
    side = rgb.shape[-1]
    if side % 2:
        raise DatasetError(f"stored patches have odd side {side}")
    rgb = center_crop(rgb, side - 2)  # 68 -> 66: the network's valid-conv input
    raw = _stack_patches(dataset.raw_patches.astype(np.float32))
    contexts = dataset.contexts.astype(np.float32)
    rows = dataset.context_rows.astype(np.int64)
    return rgb, raw, contexts, rows


def _batch_contexts(contexts, rows, idx, rng) -> torch.Tensor:
    cropped = [random_context_crop(contexts[rows[i]], rng) for i in idx]
    return _stack_patches(np.stack(cropped))


def _finite_or_raise(loss: torch.Tensor, step: int, rgb_b, raw_b) -> None:
    if torch.isfinite(loss):
        return
    raise TrainingDivergedError(
        f"non-finite loss {loss.item()} at step {step}; "
        f"batch rgb [{rgb_b.min():.4f}, {rgb_b.max():.4f}] mean {rgb_b.mean():.4f}, "
        f"raw [{raw_b.min():.4f}, {raw_b.max():.4f}] mean {raw_b.mean():.4f}"
    )


def train(
    dataset: PatchDataset,
    cfg: TrainConfig,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
) -> TrainResult:
    """Train a model on a patch dataset; returns paths and loss telemetry."""
    if len(dataset) == 0:
        raise DatasetError("cannot train on an empty patch dataset")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(cfg.seed)
    model = ReRawModel(cfg.model)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr_start)
    start_epoch = 0
    if resume_from is not None:
        start_epoch = _load_resume_state(resume_from, cfg, model, optimizer)

    rgb, raw, contexts, rows = training_tensors(dataset)
    n = rgb.shape[0]
    perm = derive_rng(cfg.seed, "val-split").permutation(n)
    val_count = min(int(round(cfg.val_fraction * n)), n - 1)
    val_idx, train_idx = perm[:val_count], perm[val_count:]
    if len(train_idx) == 0:
        raise DatasetError("validation split left no training patches")
    steps_per_epoch = math.ceil(len(train_idx) / cfg.batch_size)
    loss_fn = resolve_loss(cfg.loss)
    gammas = cfg.model.gammas

    metrics_path = out_dir / "metrics.csv"
    mode = "a" if (resume_from is not None and metrics_path.exists()) else "w"
    metrics_file = open(metrics_path, mode, newline="")
    writer = csv.writer(metrics_file)
    if mode == "w":
        writer.writerow(["step", "epoch", "lr", "train_loss", "val_loss"])

    def validation_loss() -> float:
        # Deterministic contexts (no crop) for telemetry; falls back to a
        # training probe batch when the dataset is too small to hold out 5%.
        idx = val_idx if len(val_idx) else train_idx[: cfg.batch_size]
        model.eval()
        total, count = 0.0, 0
        with torch.no_grad():
            for s in range(0, len(idx), cfg.batch_size):
                b = idx[s : s + cfg.batch_size]
                ctx_b = _stack_patches(np.stack([contexts[rows[i]] for i in b]))
                final, cands, _ = model(rgb[b], ctx_b)
                gt = make_gamma_targets(raw[b], gammas)
                total += composite_loss(final, raw[b], cands, gt, loss_fn).item() * len(b)
                count += len(b)
        model.train()
        return total / count

    epoch_val, epoch_train = [], []
    global_step = start_epoch * steps_per_epoch
    model.train()
    try:
        for epoch in range(start_epoch, cfg.epochs):
            order = derive_rng(cfg.seed, "epoch-order", epoch).permutation(train_idx)
            aug_rng = derive_rng(cfg.seed, "context-aug", epoch)
            running, seen = 0.0, 0
            for s in range(0, len(order), cfg.batch_size):
                b = order[s : s + cfg.batch_size]
                lr = lr_schedule(global_step, steps_per_epoch, cfg)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                ctx_b = _batch_contexts(contexts, rows, b, aug_rng)
                rgb_b, raw_b = rgb[b], raw[b]
                final, cands, _ = model(rgb_b, ctx_b)
                gt = make_gamma_targets(raw_b, gammas)
                loss = composite_loss(final, raw_b, cands, gt, loss_fn)
                _finite_or_raise(loss, global_step, rgb_b, raw_b)
                optimizer.zero_grad()
                loss.backward()
                if cfg.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
                optimizer.step()
                running += loss.item() * len(b)
                seen += len(b)
                writer.writerow([global_step, epoch, f"{lr:.8e}", f"{loss.item():.8e}", ""])
                global_step += 1
            train_loss = running / seen
            val_loss = validation_loss()
            epoch_train.append(train_loss)
            epoch_val.append(val_loss)
            writer.writerow([global_step - 1, epoch, "", f"{train_loss:.8e}", f"{val_loss:.8e}"])
            metrics_file.flush()
            logger.info("epoch %d/%d train %.5f val %.5f", epoch + 1, cfg.epochs, train_loss, val_loss)
            if (epoch + 1) % cfg.restart_period_epochs == 0:
                _save_training_checkpoint(
                    out_dir / f"ckpt-epoch{epoch + 1:04d}.pt", model, optimizer, cfg, epoch + 1, global_step
                )
    finally:
        metrics_file.close()

    final_path = out_dir / "checkpoint.pt"
    _save_training_checkpoint(final_path, model, optimizer, cfg, cfg.epochs, global_step)
    return TrainResult(
        checkpoint_path=final_path,
        metrics_path=metrics_path,
        final_val_loss=epoch_val[-1] if epoch_val else float("nan"),
        epoch_val_losses=epoch_val,
        epoch_train_losses=epoch_train,
    )


def _save_training_checkpoint(path, model, optimizer, cfg, epoch, global_step) -> None:
    save_checkpoint(
        path,
        model,
        extra={
            "train_config": cfg.to_dict(),
            "optimizer_state": optimizer.state_dict(),
            "epoch": epoch,
            "global_step": global_step,
        },
    )


def _load_resume_state(path, cfg: TrainConfig, model: ReRawModel, optimizer) -> int:
    from .model import load_checkpoint

    resumed, extra = load_checkpoint(path)
    if "optimizer_state" not in extra:
        raise CheckpointError(f"{path} has no optimizer state; cannot resume")
    saved_cfg = extra.get("train_config", {})
    if saved_cfg and saved_cfg != cfg.to_dict():
        raise CheckpointError(f"training config mismatch when resuming from {path}")
    model.load_state_dict(resumed.state_dict())
    model.train()
    optimizer.load_state_dict(extra["optimizer_state"])
    return int(extra["epoch"])
