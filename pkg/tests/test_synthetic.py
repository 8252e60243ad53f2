import numpy as np
import pytest

from reraw.imaging import RawMosaic, pack_rggb
from reraw.io import read_raw_file, read_rgb_png
from reraw.manifest import assign_splits, load_manifest
from reraw.synthetic import (
    DEFAULT_PROFILE,
    DISPLAY_GAMMA,
    WB_GAINS,
    bilinear_demosaic,
    forward_isp,
    generate_dataset,
    make_scene,
    scene_to_mosaic,
    synthesize_pair,
)


class TestForwardIsp:
    def test_constant_mosaic_maps_through_pipeline(self):
        # constant normalized value v: demosaic keeps v per channel, then
        # white balance and display gamma apply elementwise
        v = 0.2
        rgb = forward_isp(np.full((16, 16), v))
        for c in range(3):
            expected = min(v * WB_GAINS[c], 1.0) ** (1.0 / DISPLAY_GAMMA)
            np.testing.assert_allclose(rgb[..., c], expected, atol=1e-6)

    def test_demosaic_interpolates_interior(self):
        mosaic = np.zeros((8, 8))
        mosaic[0::2, 0::2] = 1.0  # red sites only
        rgb = bilinear_demosaic(mosaic)
        assert rgb[2, 2, 0] == pytest.approx(1.0)  # on an R site
        assert rgb[2, 3, 0] == pytest.approx(1.0)  # between two R columns
        assert rgb[..., 1].max() == 0.0

    def test_scene_mosaic_undoes_white_balance(self):
        scene = np.full((8, 8, 3), 0.5)
        mosaic = scene_to_mosaic(scene, DEFAULT_PROFILE)
        span = DEFAULT_PROFILE.white_level - DEFAULT_PROFILE.black_level
        r_expected = round(0.5 / WB_GAINS[0] * span + DEFAULT_PROFILE.black_level)
        g_expected = round(0.5 / WB_GAINS[1] * span + DEFAULT_PROFILE.black_level)
        assert mosaic[0, 0] == r_expected
        assert mosaic[0, 1] == g_expected

    def test_pair_is_consistent(self):
        rng = np.random.default_rng(0)
        mosaic, rgb = synthesize_pair(rng, DEFAULT_PROFILE, 64, 64, dark_bias=2.0)
        assert mosaic.dtype == np.uint16 and rgb.dtype == np.float32
        assert mosaic.max() <= DEFAULT_PROFILE.white_level
        norm = (mosaic.astype(np.float64) - DEFAULT_PROFILE.black_level) / (
            DEFAULT_PROFILE.white_level - DEFAULT_PROFILE.black_level
        )
        np.testing.assert_allclose(rgb, forward_isp(np.clip(norm, 0, 1)), atol=1e-6)


class TestScenes:
    def test_dark_bias_darkens(self):
        rng_a, rng_b = np.random.default_rng(1), np.random.default_rng(1)
        mild = make_scene(rng_a, 96, 96, dark_bias=1.0)
        strong = make_scene(rng_b, 96, 96, dark_bias=4.0)
        assert np.median(strong) < np.median(mild)

    def test_scene_has_bright_tail(self):
        rng = np.random.default_rng(2)
        scene = make_scene(rng, 128, 128, dark_bias=3.0)
        assert scene.max() > 0.7
        assert np.median(scene) < 0.3


class TestGenerateDataset:
    def test_writes_loadable_dataset(self, tmp_path):
        path = generate_dataset(tmp_path / "d", count=5, size=96, seed=4)
        manifest = load_manifest(path)
        assert len(manifest.pairs) == 5
        splits = {p.split for p in manifest.pairs}
        assert splits <= {"train", "test"}
        assert len(manifest.pairs_for_split("test")) == 1  # 20% of 5
        pair = manifest.pairs[0]
        mosaic = read_raw_file(manifest.raw_file(pair), pair.width, pair.height)
        packed = pack_rggb(RawMosaic(mosaic, manifest.sensor))
        assert packed.data.shape == (48, 48, 4)
        rgb = read_rgb_png(manifest.rgb_file(pair))
        assert rgb.shape == (96, 96, 3)

    def test_deterministic_given_seed(self, tmp_path):
        a = generate_dataset(tmp_path / "a", count=2, size=64, seed=9)
        b = generate_dataset(tmp_path / "b", count=2, size=64, seed=9)
        raw_a = (a.parent / "raw" / "synth_00000.raw").read_bytes()
        raw_b = (b.parent / "raw" / "synth_00000.raw").read_bytes()
        assert raw_a == raw_b
        png_a = (a.parent / "images" / "synth_00000.png").read_bytes()
        png_b = (b.parent / "images" / "synth_00000.png").read_bytes()
        assert png_a == png_b


class TestSplits:
    def test_assignment_deterministic_and_sized(self):
        ids = [f"i{k}" for k in range(50)]
        a = assign_splits(ids, seed=3)
        b = assign_splits(ids, seed=3)
        assert a == b
        assert sum(1 for v in a.values() if v == "test") == 10

    def test_seed_changes_assignment(self):
        ids = [f"i{k}" for k in range(50)]
        assert assign_splits(ids, seed=3) != assign_splits(ids, seed=4)
