import hashlib

import numpy as np
import pytest

from blotforensics import synthgen
from blotforensics.core import ContractError, DatasetManifest, load_image
from blotforensics.evaluation import closed_set
from blotforensics.features import FeatureConfig, extract_table
from blotforensics.noise import extract
from blotforensics.spectral import band_features, fft_magnitude
from blotforensics.synthgen import (FixtureSpec, Generator, blot_scene, block_dct_quantize,
                                    default_specs, gen_corpus, gen_deconv_checkerboard, gen_pristine,
                                    generate, jpeg_table, transposed_conv)
from blotforensics.texture import glcm_vector

NYQUIST_BANDS = [(0.5, 0.5), (0.5, 0.0), (0.0, 0.5)]


def block_boundary_ratio(img):
    """
    Mean squared horizontal step across 8x8 block boundaries divided by the
    mean squared step inside blocks.
    """
    d = np.diff(img, axis=1) ** 2
    boundary = d[:, 7::8]
    inside = np.delete(d, np.s_[7::8], axis=1)
    return boundary.mean() / inside.mean()


def max_bin_on_nyquist(img):
    """Is the largest non-DC bin of the residual spectrum on a Nyquist row or column?"""
    spec = fft_magnitude(extract(img, "bammey-c")).copy()
    n = spec.shape[0]
    spec[n // 2, n // 2] = 0
    r, c = np.unravel_index(np.argmax(spec), spec.shape)
    # centered layout: the Nyquist frequency sits at index 0
    return r == 0 or c == 0


def nyquist_features(img):
    return band_features(fft_magnitude(extract(img, "bammey-c")), NYQUIST_BANDS)


class TestPristine:
    def test_deterministic(self):
        for processed in (False, True):
            np.testing.assert_array_equal(gen_pristine(128, 5, processed), gen_pristine(128, 5, processed))

    def test_band_count_range(self):
        counts = [blot_scene(64, seed)[1] for seed in range(1000)]
        assert min(counts) >= 2 and max(counts) <= 6
        # every allowed count actually occurs
        assert set(counts) == {2, 3, 4, 5, 6}

    def test_scene_is_noise_free_base(self):
        scene, _ = blot_scene(128, 3)
        diff = gen_pristine(128, 3) - np.clip(scene, 0, 1)
        # the remaining difference is the sigma 0.02 noise (clipped at the edges of [0, 1])
        assert abs(diff.std() - synthgen.NOISE_SIGMA) < 0.002

    def test_processed_has_block_traces(self):
        for seed in range(10):
            clean = gen_pristine(256, seed)
            processed = gen_pristine(256, seed, processed=True)
            assert not np.array_equal(clean, processed)
            assert block_boundary_ratio(processed) > block_boundary_ratio(clean)

    def test_size_precondition(self):
        with pytest.raises(ContractError):
            gen_pristine(32, 0)

    def test_jpeg_table_quality_50_is_base(self):
        np.testing.assert_array_equal(jpeg_table(50), synthgen._JPEG_LUMA)
        assert jpeg_table(100).max() == 1

    def test_dct_quantize_keeps_blocks_of_constant(self):
        img = np.full((16, 16), 0.5)
        np.testing.assert_allclose(block_dct_quantize(img), np.round(0.5 * 255) / 255, atol=1 / 255)
        with pytest.raises(ContractError):
            block_dct_quantize(np.zeros((12, 16)))


class TestSynthetic:
    def test_transposed_conv_matches_scatter(self, rng):
        latent = rng.random((5, 4))
        k = rng.random((3, 3))
        out = np.zeros((2 * 4 + 3, 2 * 3 + 3))
        for i in range(5):
            for j in range(4):
                out[2 * i:2 * i + 3, 2 * j:2 * j + 3] += latent[i, j] * k
        np.testing.assert_allclose(transposed_conv(latent, k, 2), out[:10, :8])

    @pytest.mark.parametrize("gen", list(Generator))
    def test_range_variance_determinism(self, gen):
        a = generate(gen, 128, 4)
        assert a.shape == (128, 128)
        assert a.min() >= 0 and a.max() <= 1 and a.var() > 0
        np.testing.assert_array_equal(a, generate(gen, 128, 4))
        assert not np.array_equal(a, generate(gen, 128, 5))

    def test_odd_size_rejected(self):
        for gen in (Generator.DECONV_CHECKERBOARD, Generator.RESIZE_CONV, Generator.SMOOTH_UPSAMPLE):
            with pytest.raises(ContractError):
                generate(gen, 129, 0)

    def test_deconv_peak_at_nyquist(self):
        hits = [max_bin_on_nyquist(gen_deconv_checkerboard(256, s)) for s in range(100)]
        assert np.mean(hits) >= 0.95

    def test_stride_one_ablation(self):
        hits = [max_bin_on_nyquist(gen_deconv_checkerboard(256, s, stride=1)) for s in range(100)]
        assert np.mean(hits) < 0.5
        with pytest.raises(ContractError):
            gen_deconv_checkerboard(256, 0, stride=3)

    @pytest.mark.parametrize("gen", [Generator.RESIZE_CONV, Generator.SMOOTH_UPSAMPLE])
    def test_nyquist_weaker_than_deconv(self, gen):
        for seed in range(20):
            deconv = nyquist_features(generate(Generator.DECONV_CHECKERBOARD, 256, seed))
            other = nyquist_features(generate(gen, 256, seed))
            assert other.max() < deconv.max()

    def test_resize_conv_elevated_nyquist(self):
        """Nearest-neighbour upsampling leaves more Nyquist-line energy than the clean pristine."""
        def line_ratio(img):
            s = fft_magnitude(extract(img, "bammey-c"))
            return (s[0].sum() + s[:, 0].sum()) / np.median(s)
        r = [line_ratio(generate(Generator.RESIZE_CONV, 256, s)) for s in range(10)]
        d = [line_ratio(generate(Generator.DECONV_CHECKERBOARD, 256, s)) for s in range(10)]
        assert np.all(np.array(r) < np.array(d))

    def test_smooth_homogeneity_above_pristine(self):
        homog = slice(1, 40, 5)
        smooth = [glcm_vector(generate(Generator.SMOOTH_UPSAMPLE, 256, s)).values[homog].mean()
                  for s in range(100)]
        clean = [glcm_vector(generate(Generator.PRISTINE_CLEAN, 256, s)).values[homog].mean()
                 for s in range(100)]
        assert np.mean(smooth) > np.mean(clean)

    def test_synthetic_pairwise_separable(self):
        gens = [Generator.DECONV_CHECKERBOARD, Generator.RESIZE_CONV, Generator.SMOOTH_UPSAMPLE]
        images = ((f"{g.value}/{s}", generate(g, 256, s), g.value) for g in gens for s in range(200))
        table = extract_table(images, ["PATCH-FFT-PEAKS"], ["bammey-c"])
        X = table.get("PATCH-FFT-PEAKS", "bammey-c")
        y = table.labels.astype(str)
        for i, a in enumerate(gens):
            for b in gens[i + 1:]:
                keep = (y == a.value) | (y == b.value)
                assert closed_set(X[keep], y[keep], seed=1).bacc >= 0.9


class TestCorpus:
    def test_counts_and_round_trip(self, tmp_path):
        manifest = gen_corpus(default_specs(count=200, size=64), tmp_path)
        assert len(manifest.entries) == 1000
        assert len(manifest.labels) == 5
        loaded = DatasetManifest.load(tmp_path / "manifest.json")
        assert loaded.entries == manifest.entries
        for path in loaded.paths()[::50]:
            img = load_image(path)
            assert img.shape == (64, 64)
        # 8-bit PNG storage keeps the generator output to within half a level
        rel, label = loaded.entries[3]
        seed = int(rel.split("/")[1].split(".")[0])
        np.testing.assert_allclose(load_image(tmp_path / rel), generate(label, 64, seed), atol=0.5 / 255 + 1e-12)

    def test_rerun_byte_identical(self, tmp_path):
        specs = default_specs(count=3, size=64)

        def digests():
            return {p.relative_to(tmp_path): hashlib.sha256(p.read_bytes()).hexdigest()
                    for p in sorted(tmp_path.rglob("*")) if p.is_file()}

        gen_corpus(specs, tmp_path)
        first = digests()
        gen_corpus(specs, tmp_path)
        assert digests() == first

    def test_disjoint_seeds_per_generator(self):
        seeds = [set(s.seeds()) for s in default_specs(count=200)]
        for i, a in enumerate(seeds):
            for b in seeds[i + 1:]:
                assert not a & b

    def test_failure_cleans_up(self, tmp_path, monkeypatch):
        calls = {"n": 0}
        real = synthgen.generate

        def flaky(*args, **kw):
            calls["n"] += 1
            if calls["n"] == 4:
                raise RuntimeError("disk full")
            return real(*args, **kw)

        monkeypatch.setattr(synthgen, "generate", flaky)
        with pytest.raises(RuntimeError):
            gen_corpus(default_specs(count=2, size=64), tmp_path)
        assert not [p for p in tmp_path.rglob("*") if p.is_file()]

    def test_spec_validation(self):
        with pytest.raises(ContractError):
            FixtureSpec("stylegan", 10)
        with pytest.raises(ContractError):
            FixtureSpec("resize-conv", 10, size=65)
        with pytest.raises(ContractError):
            FixtureSpec("resize-conv", -1)
