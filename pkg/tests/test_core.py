import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from blotforensics.core import (ContractError, DatasetManifest, FeatureVector, ImageDecodeError,
                                UnsupportedFormatError, central_crop, load_features, load_image,
                                save_features)


def write_pgm(path, pixels, width, height, maxval=255):
    header = f"P5\n{width} {height}\n{maxval}\n".encode()
    path.write_bytes(header + bytes(pixels))


class TestLoadImage:
    def test_pgm_extremes(self, tmp_path):
        p = tmp_path / "a.pgm"
        write_pgm(p, [0, 255, 255, 0], 2, 2)
        np.testing.assert_array_equal(load_image(p), [[0.0, 1.0], [1.0, 0.0]])

    def test_tiff_16bit_full_scale(self, tmp_path):
        p = tmp_path / "a.tif"
        arr = np.array([[65535, 0], [32768, 1]], dtype=np.uint16)
        Image.fromarray(arr).save(p)
        img = load_image(p)
        assert img[0, 0] == 1.0
        assert img[0, 1] == 0.0
        assert img[1, 0] == pytest.approx(32768 / 65535)

    def test_tiff_8bit(self, tmp_path):
        p = tmp_path / "a.tif"
        Image.fromarray(np.array([[255, 51]], dtype=np.uint8)).save(p)
        np.testing.assert_allclose(load_image(p), [[1.0, 0.2]])

    def test_rgb_red_luminance(self, tmp_path):
        p = tmp_path / "red.png"
        Image.fromarray(np.array([[[255, 0, 0]]], dtype=np.uint8), mode="RGB").save(p)
        # hand evaluation: 0.299 * 1 + 0.587 * 0 + 0.114 * 0
        assert load_image(p)[0, 0] == pytest.approx(0.299, abs=1e-15)

    @given(st.integers(0, 255))
    @settings(max_examples=30, deadline=None)
    def test_gray_rgb_pixel_is_exact(self, v):
        import tempfile, os
        with tempfile.TemporaryDirectory() as d:
            p = os.path.join(d, "g.png")
            Image.fromarray(np.full((1, 1, 3), v, dtype=np.uint8), mode="RGB").save(p)
            assert load_image(p)[0, 0] == v / 255.0

    def test_png_roundtrip_8bit(self, tmp_path, rng):
        arr = rng.integers(0, 256, size=(5, 7)).astype(np.uint8)
        p = tmp_path / "x.png"
        Image.fromarray(arr).save(p)
        np.testing.assert_array_equal(load_image(p), arr / 255.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_corrupt_file_names_path(self, tmp_path):
        p = tmp_path / "broken.png"
        p.write_bytes(b"\x89PNG\r\n\x1a\nthis is not a png")
        with pytest.raises(ImageDecodeError) as exc:
            load_image(p)
        assert str(p) in str(exc.value)

    def test_unsupported_format(self, tmp_path):
        p = tmp_path / "x.jpg"
        Image.fromarray(np.zeros((8, 8), dtype=np.uint8)).save(p, format="JPEG")
        with pytest.raises(UnsupportedFormatError):
            load_image(p)


class TestCentralCrop:
    def test_large_image_centered(self):
        img = np.arange(512 * 512, dtype=np.float64).reshape(512, 512)
        out = central_crop(img, 256)
        np.testing.assert_array_equal(out, img[128:384, 128:384])

    def test_identity_at_size(self, rng):
        img = rng.random((256, 256))
        np.testing.assert_array_equal(central_crop(img, 256), img)

    def test_pad_then_crop_against_oracle(self, rng):
        img = rng.random((100, 300))
        out = central_crop(img, 256)

        # independent oracle: mirror index arithmetic for rows, plain offset for cols
        def mirror(i, n):
            while i < 0 or i >= n:
                i = -i - 1 if i < 0 else 2 * n - i - 1
            return i

        before = (256 - 100) // 2
        c0 = (300 - 256) // 2
        expected = np.array([[img[mirror(r - before, 100), c0 + c] for c in range(256)]
                             for r in range(256)])
        np.testing.assert_array_equal(out, expected)

    def test_tiny_image_multiple_mirror_passes(self):
        img = np.arange(20 * 20, dtype=float).reshape(20, 20) / 400
        out = central_crop(img, 64)
        assert out.shape == (64, 64)
        assert set(np.unique(out)) <= set(np.unique(img))

    def test_size_precondition(self, rng):
        with pytest.raises(ContractError):
            central_crop(rng.random((32, 32)), 8)

    @given(h=st.integers(16, 80), w=st.integers(16, 80), size=st.integers(16, 64))
    @settings(max_examples=40, deadline=None)
    def test_idempotent(self, h, w, size):
        img = np.random.default_rng(h * 1000 + w).random((h, w))
        once = central_crop(img, size)
        np.testing.assert_array_equal(central_crop(once, size), once)


class TestFeatureFiles:
    def _vec(self, rng, dim=5):
        return FeatureVector(rng.normal(size=dim) * 10 ** rng.uniform(-8, 8, size=dim), "GLCM", "mandelli-t")

    def test_roundtrip(self, tmp_path, rng):
        rows = [(self._vec(rng), lbl) for lbl in ("a", "b", "c")]
        save_features(rows, tmp_path / "f.csv")
        back = load_features(tmp_path / "f.csv")
        assert back == rows

    def test_header(self, tmp_path, rng):
        save_features([(self._vec(rng, 3), "x")], tmp_path / "f.csv")
        header = (tmp_path / "f.csv").read_text().splitlines()[0]
        assert header == "label,extractor,family,v0,v1,v2"

    def test_empty(self, tmp_path):
        save_features([], tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text().strip() == "label,extractor,family"
        assert load_features(tmp_path / "e.csv") == []

    def test_nan_rejected(self, tmp_path):
        fv = FeatureVector([1.0, np.nan], "GLCM", "none")
        with pytest.raises(ContractError):
            save_features([(fv, "a")], tmp_path / "n.csv")

    def test_mixed_dims_rejected(self, tmp_path, rng):
        with pytest.raises(ContractError):
            save_features([(self._vec(rng, 3), "a"), (self._vec(rng, 4), "b")], tmp_path / "m.csv")

    @given(arrays(np.float64, st.integers(1, 12),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_property(self, values):
        import tempfile, os
        with tempfile.TemporaryDirectory() as d:
            p = os.path.join(d, "f.csv")
            rows = [(FeatureVector(values, "FFT-PEAKS", "gaussian"), "lbl")]
            save_features(rows, p)
            assert load_features(p) == rows


class TestManifest:
    def test_roundtrip_and_relative_root(self, tmp_path):
        (tmp_path / "a").mkdir()
        for name in ("a/1.png", "a/2.png"):
            Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(tmp_path / name)
        m = DatasetManifest(".", [("a/1.png", "x"), ("a/2.png", "y")])
        m.save(tmp_path / "manifest.json")
        back = DatasetManifest.load(tmp_path / "manifest.json")
        assert back.entries == m.entries
        assert back.labels == ["x", "y"]
        assert back.paths("y") == [tmp_path / "a/2.png"]

    def test_missing_entry(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"root": ".", "entries": [{"path": "no.png", "label": "x"}]}))
        with pytest.raises(FileNotFoundError):
            DatasetManifest.load(tmp_path / "m.json")

    def test_declared_label_without_entries(self, tmp_path):
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(tmp_path / "1.png")
        m = DatasetManifest(tmp_path, [("1.png", "x")])
        with pytest.raises(ContractError):
            m.validate(["x", "y"])
