import csv
import hashlib
import math

import numpy as np
import pytest
import torch

from reraw.errors import ConfigError, DatasetError, TrainingDivergedError
from reraw.manifest import load_manifest
from reraw.model import ReRawConfig
from reraw.objective import LossConfig
from reraw.sampling import PatchDataset, build_patch_dataset
from reraw.synthetic import generate_dataset
from reraw.trainer import TrainConfig, _finite_or_raise, lr_schedule, train

from conftest import TINY_MODEL


@pytest.fixture(scope="module")
def patch_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("trainer-data")
    manifest_path = generate_dataset(root / "data", count=8, size=160, seed=3)
    manifest = load_manifest(manifest_path)
    build_patch_dataset(manifest, root / "patches", sampling="stratified", patches_per_image=4, seed=5)
    return PatchDataset(root / "patches")


def tiny_train_config(**overrides):
    base = dict(
        batch_size=8,
        epochs=4,
        restart_period_epochs=2,
        seed=11,
        loss=LossConfig("hln"),
        model=ReRawConfig(**TINY_MODEL),
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestTrainConfig:
    def test_defaults_match_training_recipe(self):
        cfg = TrainConfig()
        assert cfg.batch_size == 32
        assert cfg.epochs == 128
        assert cfg.restart_period_epochs == 16
        assert cfg.lr_start == pytest.approx(1e-3)
        assert cfg.lr_floor == pytest.approx(1e-5)

    def test_epochs_divisible_by_restart(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=10, restart_period_epochs=16)

    def test_lr_ordering(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr_start=1e-5, lr_floor=1e-3)

    def test_yaml_round_trip(self, tmp_path):
        cfg = tiny_train_config()
        path = tmp_path / "train.yaml"
        cfg.to_yaml(path)
        assert TrainConfig.from_yaml(path) == cfg


class TestLrSchedule:
    def test_window_start_is_lr_start(self):
        cfg = TrainConfig()
        assert lr_schedule(0, 100, cfg) == pytest.approx(1e-3)
        window = cfg.restart_period_epochs * 100
        assert lr_schedule(window, 100, cfg) == pytest.approx(1e-3)
        assert lr_schedule(3 * window, 100, cfg) == pytest.approx(1e-3)

    def test_window_end_reaches_floor_within_one_percent(self):
        cfg = TrainConfig()
        window = cfg.restart_period_epochs * 100
        lr_last = lr_schedule(window - 1, 100, cfg)
        assert abs(lr_last - cfg.lr_floor) / cfg.lr_floor < 0.01

    def test_mid_window_value(self):
        # cosine formula: halfway gives (lr_start + lr_floor) / 2
        cfg = TrainConfig()
        window = cfg.restart_period_epochs * 100
        mid = lr_schedule(window // 2, 100, cfg)
        assert mid == pytest.approx((1e-3 + 1e-5) / 2, rel=1e-12)
        assert mid == pytest.approx(5.05e-4, rel=1e-3)

    def test_never_leaves_bounds(self):
        cfg = TrainConfig()
        for step in range(0, 5000, 37):
            lr = lr_schedule(step, 13, cfg)
            assert cfg.lr_floor <= lr <= cfg.lr_start


class TestTraining:
    def test_smoke_writes_outputs_and_telemetry(self, patch_dataset, tmp_path):
        cfg = tiny_train_config()
        result = train(patch_dataset, cfg, tmp_path / "run")
        assert result.checkpoint_path.exists()
        assert (tmp_path / "run" / "ckpt-epoch0002.pt").exists()
        assert (tmp_path / "run" / "ckpt-epoch0004.pt").exists()
        with open(result.metrics_path) as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0].keys() == {"step", "epoch", "lr", "train_loss", "val_loss"}
        lrs = [float(r["lr"]) for r in rows if r["lr"]]
        assert all(cfg.lr_floor <= lr <= cfg.lr_start for lr in lrs)
        val_rows = [r for r in rows if r["val_loss"]]
        assert len(val_rows) == cfg.epochs
        assert math.isfinite(result.final_val_loss)

    def test_fixed_seed_reproduces_loss_curve(self, patch_dataset, tmp_path):
        cfg = tiny_train_config(epochs=2, restart_period_epochs=2)
        a = train(patch_dataset, cfg, tmp_path / "a")
        b = train(patch_dataset, cfg, tmp_path / "b")
        assert a.epoch_train_losses == b.epoch_train_losses
        assert a.epoch_val_losses == b.epoch_val_losses

    def test_resume_from_restart_boundary(self, patch_dataset, tmp_path):
        cfg = tiny_train_config()
        full = train(patch_dataset, cfg, tmp_path / "full")
        resumed = train(
            patch_dataset,
            cfg,
            tmp_path / "resumed",
            resume_from=tmp_path / "full" / "ckpt-epoch0002.pt",
        )
        np.testing.assert_allclose(
            resumed.epoch_train_losses, full.epoch_train_losses[2:], rtol=1e-4
        )
        np.testing.assert_allclose(
            resumed.epoch_val_losses, full.epoch_val_losses[2:], rtol=1e-4
        )

    def test_validation_loss_decreases_on_toy_set(self, patch_dataset, tmp_path):
        # window endpoints (every 2 epochs here) must be monotone decreasing
        cfg = tiny_train_config(epochs=6, restart_period_epochs=2)
        result = train(patch_dataset, cfg, tmp_path / "run")
        endpoints = result.epoch_val_losses[1::2]
        assert all(b < a for a, b in zip(endpoints, endpoints[1:]))

    def test_dataset_files_untouched(self, patch_dataset, tmp_path):
        def tree_hash():
            digest = hashlib.sha256()
            for p in sorted(patch_dataset.path.rglob("*")):
                if p.is_file():
                    digest.update(p.name.encode())
                    digest.update(p.read_bytes())
            return digest.hexdigest()

        before = tree_hash()
        train(patch_dataset, tiny_train_config(epochs=2, restart_period_epochs=2), tmp_path / "r")
        assert tree_hash() == before

    def test_empty_dataset_rejected(self, patch_dataset, tmp_path):
        empty = PatchDataset.__new__(PatchDataset)
        empty.index = {"patches": []}
        with pytest.raises(DatasetError):
            train(empty, tiny_train_config(), tmp_path / "x")

    def test_divergence_guard(self):
        zeros = torch.zeros((2, 3))
        with pytest.raises(TrainingDivergedError):
            _finite_or_raise(torch.tensor(float("nan")), 3, zeros, zeros)
        with pytest.raises(TrainingDivergedError):
            _finite_or_raise(torch.tensor(float("inf")), 3, zeros, zeros)
        _finite_or_raise(torch.tensor(1.0), 3, zeros, zeros)
