import json

import numpy as np
import pytest
import torch

from reraw.converter import (
    ConversionReport,
    _tile_origins,
    convert_batch,
    convert_image,
    load_conversion_report,
)
from reraw.errors import CheckpointError, InputError
from reraw.imaging import RawMosaic, pack_rggb
from reraw.io import read_raw_file, write_rgb_png
from reraw.model import ReRawConfig, ReRawModel, save_checkpoint
from reraw.sampling import build_context

from conftest import TINY_MODEL


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(17)
    m = ReRawModel(ReRawConfig(**TINY_MODEL))
    m.eval()
    return m


def random_rgb(rng, h, w):
    return rng.random((h, w, 3)).astype(np.float32)


class TestTileGrid:
    def test_exact_multiple(self):
        assert _tile_origins(64) == [0, 32]
        assert _tile_origins(96) == [0, 32, 64]

    def test_tail_tile_shifted_inward(self):
        assert _tile_origins(50) == [0, 18]
        assert _tile_origins(33) == [0, 1]


class TestConvertImage:
    def test_odd_dims_cropped(self, model, rng):
        out, info = convert_image(model, random_rgb(rng, 131, 131))
        assert out.shape == (65, 65, 4)
        assert info == {"width": 130, "height": 130, "cropped": True}

    def test_even_non_tile_multiple_is_not_cropped(self, model, rng):
        # 130 is even: the full (H/2, W/2) output is produced, with the tail
        # tile shifted inward (recomputing identical values by locality)
        out, info = convert_image(model, random_rgb(rng, 130, 130))
        assert out.shape == (65, 65, 4)
        assert not info["cropped"]

    def test_tile_multiple_exact_grid(self, model, rng):
        out, info = convert_image(model, random_rgb(rng, 128, 128))
        assert out.shape == (64, 64, 4)
        assert info == {"width": 128, "height": 128, "cropped": False}

    def test_output_dims_half_input(self, model, rng):
        out, info = convert_image(model, random_rgb(rng, 64, 96))
        assert out.shape == (32, 48, 4)
        assert not info["cropped"]

    def test_output_in_unit_interval(self, model, rng):
        out, _ = convert_image(model, random_rgb(rng, 96, 96))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_too_small_image_rejected(self, model, rng):
        with pytest.raises(InputError):
            convert_image(model, random_rgb(rng, 62, 62))

    def test_deterministic(self, model, rng):
        img = random_rgb(rng, 128, 128)
        a, _ = convert_image(model, img)
        b, _ = convert_image(model, img)
        np.testing.assert_array_equal(a, b)

    def test_batch_size_does_not_change_result(self, model, rng):
        img = random_rgb(rng, 192, 192)
        a, _ = convert_image(model, img, batch_size=1)
        b, _ = convert_image(model, img, batch_size=16)
        np.testing.assert_array_equal(a, b)

    def test_quadrant_equivalence_with_shared_context(self, model, rng):
        # tiling oracle from the 4x4 receptive field: converting the whole
        # image equals converting each 64px quadrant under the same context,
        # bit-identical away from reflection-padded borders
        img = random_rgb(rng, 128, 128)
        context = build_context(img, crop=False)
        whole, _ = convert_image(model, img, context=context)
        for qy in (0, 1):
            for qx in (0, 1):
                quad = img[qy * 64 : qy * 64 + 64, qx * 64 : qx * 64 + 64]
                qout, _ = convert_image(model, quad, context=context)
                interior = np.s_[1:31, 1:31]
                np.testing.assert_array_equal(
                    qout[interior], whole[qy * 32 + 1 : qy * 32 + 31, qx * 32 + 1 : qx * 32 + 31]
                )

    def test_constant_input_constant_output(self, model):
        img = np.full((96, 96, 3), 0.25, dtype=np.float32)
        out, _ = convert_image(model, img)
        interior = out[1:-1, 1:-1]  # borders see reflection padding (same values here)
        for c in range(4):
            assert np.ptp(interior[..., c]) == 0.0


class TestConvertBatch:
    @pytest.fixture()
    def checkpoint(self, model, tmp_path):
        path = tmp_path / "model.pt"
        save_checkpoint(path, model)
        return path

    def test_empty_list(self, checkpoint, tmp_path, profile):
        report = convert_batch(checkpoint, [], tmp_path / "out", profile)
        assert report.entries == [] and report.skipped == []
        assert (tmp_path / "out" / "conversion_manifest.json").exists()

    def test_unreadable_file_is_skipped_not_fatal(self, checkpoint, tmp_path, profile, rng):
        write_rgb_png(tmp_path / "ok.png", random_rgb(rng, 96, 96))
        inputs = [("ok", tmp_path / "ok.png"), ("missing", tmp_path / "nope.png")]
        report = convert_batch(checkpoint, inputs, tmp_path / "out", profile)
        assert [e.image_id for e in report.entries] == ["ok"]
        assert len(report.skipped) == 1
        assert report.skipped[0]["image_id"] == "missing"

    def test_n_images_n_outputs_with_manifest_rows(self, checkpoint, tmp_path, profile, rng):
        inputs = []
        for i in range(3):
            p = tmp_path / f"img_{i}.png"
            write_rgb_png(p, random_rgb(rng, 96, 128))
            inputs.append((f"img_{i}", p))
        report = convert_batch(checkpoint, inputs, tmp_path / "out", profile)
        assert len(report.entries) == 3
        doc = load_conversion_report(tmp_path / "out")
        assert len(doc["entries"]) == 3
        assert doc["checkpoint_sha"] == report.checkpoint_sha
        for entry in doc["entries"]:
            raw_path = tmp_path / "out" / entry["output"]
            assert raw_path.exists()
            mosaic = read_raw_file(raw_path, entry["width"], entry["height"])
            packed = pack_rggb(RawMosaic(mosaic, profile))
            assert packed.data.shape == (entry["height"] // 2, entry["width"] // 2, 4)

    def test_bad_checkpoint(self, tmp_path, profile):
        bad = tmp_path / "bad.pt"
        bad.write_bytes(b"junk")
        with pytest.raises(CheckpointError):
            convert_batch(bad, [], tmp_path / "out", profile)

    def test_report_round_trip(self, profile, tmp_path):
        report = ConversionReport(checkpoint="c.pt", checkpoint_sha="abc", sensor=profile.to_dict())
        report.save(tmp_path / "m.json")
        with open(tmp_path / "m.json") as fh:
            assert json.load(fh)["checkpoint_sha"] == "abc"
