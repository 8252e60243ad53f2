import csv
import json
import shutil

import pytest

from reraw.cli import main
from reraw.manifest import load_manifest

TINY_TRAIN_FLAGS = [
    "--heads", "2", "--trunk-width", "16", "--stem-channels", "12", "--blocks", "2",
    "--encoder-width", "8", "--encoder-blocks", "2",
    "--epochs", "2", "--restart-period", "2", "--batch-size", "8", "--seed", "11",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--count", "10", "--size", "256",
                 "--seed", "3"]) == 0
    for sampling in ("random", "stratified"):
        code = main([
            "prepare", "--manifest", str(root / "data"), "--out", str(root / sampling),
            "--sampling", sampling, "--patches-per-image", "6", "--seed", "7",
        ])
        assert code == 0
    return root


class TestPrepare:
    def test_index_byte_identical_for_same_seed(self, workspace, tmp_path):
        code = main([
            "prepare", "--manifest", str(workspace / "data"), "--out", str(tmp_path / "again"),
            "--sampling", "stratified", "--patches-per-image", "6", "--seed", "7",
        ])
        assert code == 0
        a = (workspace / "stratified" / "index.json").read_bytes()
        b = (tmp_path / "again" / "index.json").read_bytes()
        assert a == b

    def test_patch_count_scales_with_flag(self, workspace):
        index = json.loads((workspace / "stratified" / "index.json").read_text())
        n_train_images = len(index["images"])
        assert len(index["patches"]) == 6 * n_train_images

    def test_shards_byte_identical_too(self, workspace, tmp_path):
        code = main([
            "prepare", "--manifest", str(workspace / "data"), "--out", str(tmp_path / "again2"),
            "--sampling", "stratified", "--patches-per-image", "6", "--seed", "7",
        ])
        assert code == 0
        a = (workspace / "stratified" / "shard-0000_raw.npy").read_bytes()
        b = (tmp_path / "again2" / "shard-0000_raw.npy").read_bytes()
        assert a == b

    def test_missing_manifest_exits_2(self, tmp_path):
        assert main(["prepare", "--manifest", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 2


@pytest.fixture(scope="module")
def trained(workspace):
    code = main([
        "train", "--dataset", str(workspace / "stratified"), "--out", str(workspace / "run"),
        *TINY_TRAIN_FLAGS,
    ])
    assert code == 0
    return workspace / "run" / "checkpoint.pt"


class TestTrain:
    def test_checkpoint_and_metrics_written(self, trained, workspace):
        assert trained.exists()
        with open(workspace / "run" / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and rows[0]["step"] == "0"

    def test_final_val_loss_printed(self, workspace, capsys):
        code = main([
            "train", "--dataset", str(workspace / "stratified"),
            "--out", str(workspace / "run2"), *TINY_TRAIN_FLAGS, "--loss", "l1",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "final validation loss" in out

    def test_ablation_flags_accepted(self, workspace):
        code = main([
            "train", "--dataset", str(workspace / "stratified"),
            "--out", str(workspace / "run3"), *TINY_TRAIN_FLAGS,
            "--no-context", "--no-scaling", "--heads", "1", "--epochs", "1",
            "--restart-period", "1",
        ])
        assert code == 0

    def test_invalid_config_exits_3(self, workspace):
        code = main([
            "train", "--dataset", str(workspace / "stratified"), "--out", str(workspace / "bad"),
            "--epochs", "5", "--restart-period", "2",
        ])
        assert code == 3


class TestConvertEvaluate:
    def test_pipeline_wiring(self, workspace, trained, capsys):
        code = main([
            "convert", "--checkpoint", str(trained), "--manifest", str(workspace / "data"),
            "--split", "test", "--out", str(workspace / "converted"),
        ])
        assert code == 0
        manifest = load_manifest(workspace / "data")
        n_test = len(manifest.pairs_for_split("test"))
        raws = list((workspace / "converted").glob("*.raw"))
        assert len(raws) == n_test

        code = main([
            "evaluate", "--pred", str(workspace / "converted"), "--manifest", str(workspace / "data"),
            "--split", "test", "--out", str(workspace / "eval"),
        ])
        assert code == 0
        with open(workspace / "eval" / "metrics.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + n_test + 1  # header + images + mean
        assert (workspace / "eval" / "psnr_hist.png").exists()

    def test_evaluate_on_copied_targets_is_perfect(self, workspace, tmp_path, capsys):
        manifest = load_manifest(workspace / "data")
        pred = tmp_path / "copies"
        pred.mkdir()
        for pair in manifest.pairs_for_split("test"):
            shutil.copy(manifest.raw_file(pair), pred / f"{pair.image_id}.raw")
        code = main([
            "evaluate", "--pred", str(pred), "--manifest", str(workspace / "data"),
            "--split", "test", "--out", str(tmp_path / "eval"),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "mean SSIM 1.000000" in out

    def test_convert_without_inputs_exits_2(self, trained, tmp_path):
        assert main(["convert", "--checkpoint", str(trained), "--out", str(tmp_path / "x")]) == 2


class TestStats:
    def test_entropy_comparison_and_plot(self, workspace):
        code = main([
            "stats", "--manifest", str(workspace / "data"),
            "--datasets", str(workspace / "random"), str(workspace / "stratified"),
            "--out", str(workspace / "stats"),
        ])
        assert code == 0
        with open(workspace / "stats" / "stats.json") as fh:
            stats = json.loads(fh.read())
        assert (workspace / "stats" / "histograms.png").exists()
        labels = {v["sampling"]: k for k, v in stats["datasets"].items()}
        strat = stats["datasets"][labels["stratified"]]["rgb_patch_mean_entropy"]
        rand = stats["datasets"][labels["random"]]["rgb_patch_mean_entropy"]
        # dark-skewed population: stratified sampling flattens brightness
        for ch in "RGB":
            assert strat[ch] >= rand[ch]
        assert sum(strat[ch] for ch in "RGB") > sum(rand[ch] for ch in "RGB")
