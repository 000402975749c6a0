import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from maskcyclegan import toydata
from maskcyclegan.data import DatasetSpec, load_image_stack
from maskcyclegan.evaluation import (
    ExtractorError,
    FeatureStats,
    FidMatrix,
    ToyFeatureExtractor,
    extract_features,
    fid_matrix,
    frechet_distance,
    render_output_grid,
    stats_for_directory,
    translate_set,
)
from maskcyclegan.masks import full_mask, sample_centered_square, sample_round
from maskcyclegan.networks import build_models


def gaussian_stats(mu, sigma, n=100):
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    return FeatureStats(mu=mu, sigma=sigma, n=n, extractor_id="synthetic")


class TestFrechetClosedForms:
    """Closed-form Gaussian oracle: d(p,q)^2 = |mu1-mu2|^2 + Tr(S1+S2-2(S1 S2)^1/2).

    For commuting covariances the trace term is computable by hand, which
    pins the two identities below.
    """

    def test_identical_stats_zero(self):
        rng = np.random.default_rng(0)
        feats = rng.normal(size=(50, 6))
        p = FeatureStats.fit(feats)
        assert frechet_distance(p, p) <= 1e-6

    def test_mean_shift_identity_covariances(self):
        # Tr(I + I - 2I) = 0, so distance = |v|^2 = 3^2 + 4^2 = 25
        p = gaussian_stats([0.0, 0.0], np.eye(2))
        q = gaussian_stats([3.0, 4.0], np.eye(2))
        assert frechet_distance(p, q) == pytest.approx(25.0, abs=1e-4)

    def test_scaled_identity_covariances(self):
        # equal means, sigma^2 I vs I in d dims: d * (sigma - 1)^2 = 4 * 1 = 4
        d, sigma = 4, 2.0
        p = gaussian_stats(np.zeros(d), sigma ** 2 * np.eye(d))
        q = gaussian_stats(np.zeros(d), np.eye(d))
        assert frechet_distance(p, q) == pytest.approx(d * (sigma - 1) ** 2, abs=1e-4)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        f1, f2 = rng.normal(size=(40, 5)), rng.normal(loc=1.0, size=(40, 5))
        p, q = FeatureStats.fit(f1), FeatureStats.fit(f2)
        assert frechet_distance(p, q) == pytest.approx(frechet_distance(q, p), abs=1e-8)

    @given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
    @settings(max_examples=25, deadline=None)
    def test_monotone_in_mean_separation(self, r1, r2):
        lo, hi = sorted((r1, r2))
        if hi - lo < 1e-6:
            return
        p = gaussian_stats([0.0, 0.0], np.eye(2))
        near = gaussian_stats([lo, 0.0], np.eye(2))
        far = gaussian_stats([hi, 0.0], np.eye(2))
        assert frechet_distance(p, near) < frechet_distance(p, far)

    def test_dimension_mismatch(self):
        p = gaussian_stats([0.0, 0.0], np.eye(2))
        q = gaussian_stats([0.0, 0.0, 0.0], np.eye(3))
        with pytest.raises(ValueError):
            frechet_distance(p, q)

    def test_rank_deficient_covariances(self):
        # fewer samples than dimensions: sample covariance is singular
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(5, 16))
        p = FeatureStats.fit(feats)
        q = FeatureStats.fit(rng.normal(size=(5, 16)))
        value = frechet_distance(p, q)
        assert np.isfinite(value) and value >= 0


class TestFeatureStats:
    def test_fit_shapes(self):
        feats = np.random.default_rng(3).normal(size=(20, 8))
        stats = FeatureStats.fit(feats, "toy-mnist")
        assert stats.mu.shape == (8,)
        assert stats.sigma.shape == (8, 8)
        assert stats.n == 20

    def test_covariance_is_unbiased(self):
        feats = np.array([[0.0, 0.0], [2.0, 2.0]])
        stats = FeatureStats.fit(feats)
        np.testing.assert_allclose(stats.sigma, np.full((2, 2), 2.0))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            FeatureStats.fit(np.zeros((1, 4)))

    def test_save_load_round_trip(self, tmp_path):
        stats = FeatureStats.fit(np.random.default_rng(4).normal(size=(10, 4)), "x")
        path = tmp_path / "stats.npz"
        stats.save(path)
        loaded = FeatureStats.load(path)
        np.testing.assert_array_equal(loaded.mu, stats.mu)
        np.testing.assert_array_equal(loaded.sigma, stats.sigma)
        assert (loaded.n, loaded.extractor_id) == (10, "x")


class TestExtractors:
    def test_same_image_identical_rows(self):
        img = torch.rand(1, 3, 32, 32) * 2 - 1
        batch = torch.cat([img, img], dim=0)
        feats = extract_features(batch, "toy-mnist")
        np.testing.assert_array_equal(feats[0], feats[1])

    def test_row_count_matches_input(self):
        batch = torch.rand(7, 3, 32, 32) * 2 - 1
        assert extract_features(batch, "toy-mnist").shape == (7, ToyFeatureExtractor.FEATURE_DIM)

    def test_unknown_extractor(self):
        with pytest.raises(ExtractorError):
            extract_features(torch.zeros(2, 3, 32, 32), "resnet-9000")

    def test_too_few_images(self):
        with pytest.raises(ValueError):
            extract_features(torch.zeros(1, 3, 32, 32), "toy-mnist")

    def test_resizes_other_resolutions(self):
        feats = extract_features(torch.rand(3, 3, 48, 48), "toy-mnist")
        assert feats.shape[0] == 3

    def test_deterministic_construction(self):
        e1, e2 = ToyFeatureExtractor(), ToyFeatureExtractor()
        for p1, p2 in zip(e1.parameters(), e2.parameters()):
            assert torch.equal(p1, p2)


@pytest.fixture(scope="module")
def toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("evaldata")
    toydata.make_dataset(root, n_train=12, n_test=6, size=32, seed=1)
    return root


@pytest.fixture(scope="module")
def tiny_models():
    return build_models(32, seed=3, base_width=8, n_blocks=1)


class TestFidMatrix:
    def test_matrix_properties(self, toy_root, tiny_models, tmp_path, monkeypatch):
        monkeypatch.setenv("MASKCYCLE_CACHE", str(tmp_path / "cache"))
        gens, _ = tiny_models
        spec = DatasetSpec.from_layout(toy_root, resolution=32)
        matrix = fid_matrix(gens, spec, scales=(0.5, 1.0), direction="b2a",
                            extractor_id="toy-mnist")
        assert matrix.labels == ("train", "test", "gen@0.5", "gen@1")
        values = matrix.values
        np.testing.assert_allclose(values, values.T, atol=1e-6)
        assert np.abs(np.diag(values)).max() <= 1e-6
        assert (values >= 0).all()

    def test_comparison_flags_present(self, toy_root, tiny_models, tmp_path, monkeypatch):
        monkeypatch.setenv("MASKCYCLE_CACHE", str(tmp_path / "cache"))
        gens, _ = tiny_models
        spec = DatasetSpec.from_layout(toy_root, resolution=32)
        matrix = fid_matrix(gens, spec, scales=(0.8, 1.0), direction="a2b",
                            extractor_id="toy-mnist")
        flags = matrix.comparisons()
        assert "fid(gen@0.8,test) < fid(gen@1,test)" in flags
        assert all(isinstance(v, bool) for v in flags.values())

    def test_json_round_trip(self):
        matrix = FidMatrix(labels=("x", "y"), values=np.array([[0.0, 1.5], [1.5, 0.0]]),
                           sample_counts=(4, 4))
        restored = FidMatrix.from_json(matrix.to_json())
        assert restored.labels == matrix.labels
        np.testing.assert_array_equal(restored.values, matrix.values)

    def test_stats_cache_hit(self, toy_root, tmp_path, monkeypatch):
        monkeypatch.setenv("MASKCYCLE_CACHE", str(tmp_path / "cache2"))
        first = stats_for_directory(toy_root / "trainA", 32, "toy-mnist")
        cached = stats_for_directory(toy_root / "trainA", 32, "toy-mnist")
        np.testing.assert_array_equal(first.mu, cached.mu)
        assert any((tmp_path / "cache2" / "fid-cache").iterdir())

    def test_heatmap_written(self, tmp_path):
        matrix = FidMatrix(labels=("a", "b"), values=np.array([[0.0, 2.0], [2.0, 0.0]]))
        out = tmp_path / "heat.png"
        matrix.save_heatmap(out)
        assert out.exists() and out.stat().st_size > 0


class TestOutputGrid:
    def test_layout_dimensions(self, toy_root, tiny_models):
        gens, _ = tiny_models
        sources = load_image_stack(toy_root / "testA", 32, limit=2)
        grid_masks = [sample_centered_square(32, 0.5), full_mask(32),
                      sample_round(32, 0.8)]
        grid = render_output_grid(gens.a2b, sources, grid_masks)
        pad = 2
        expected_w = (len(grid_masks) + 1) * (32 + pad) + pad
        expected_h = (sources.shape[0] + 1) * (32 + pad) + pad
        assert grid.size == (expected_w, expected_h)

    def test_round_masks_at_standard_scales(self, toy_root, tiny_models):
        gens, _ = tiny_models
        sources = load_image_stack(toy_root / "testA", 32, limit=1)
        grid_masks = [sample_round(32, s) for s in (0.5, 0.8, 1.0)]
        grid = render_output_grid(gens.a2b, sources, grid_masks)
        assert grid.size[0] > 0

    def test_outputs_in_range(self, toy_root, tiny_models):
        gens, _ = tiny_models
        sources = load_image_stack(toy_root / "testA", 32, limit=2)
        out = translate_set(gens.a2b, sources, sample_round(32, 0.8))
        assert torch.isfinite(out).all()
        assert float(out.min()) >= -1.0 and float(out.max()) <= 1.0

    def test_mask_resolution_mismatch(self, tiny_models):
        gens, _ = tiny_models
        with pytest.raises(ValueError):
            render_output_grid(gens.a2b, torch.zeros(1, 3, 32, 32), [full_mask(64)])
