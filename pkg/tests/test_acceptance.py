"""Acceptance gate: every release criterion, one test per criterion, each
printing a [PASS] line with the measured quantities (run with -s to see them).
"""

import time

import numpy as np
import torch

from maskcyclegan.data import DatasetSpec, load_image_stack
from maskcyclegan.evaluation import (
    FeatureStats,
    extract_features,
    fid_matrix,
    frechet_distance,
    translate_set,
)
from maskcyclegan.losses import LossWeights, cycle_loss, gan_loss_discriminator, \
    gan_loss_generator, identity_loss
from maskcyclegan.masks import (
    Mask,
    MaskSchemeConfig,
    full_mask,
    make_rng,
    sample_centered_square,
    sample_multi_rectangles_stats,
    sample_round,
)
from maskcyclegan.networks import MaskedGenerator, load_checkpoint, mask_to_tensor
from maskcyclegan.training import read_loss_log


def passed(name: str, detail: str = ""):
    suffix = f" — {detail}" if detail else ""
    print(f"\n[PASS] {name}{suffix}")


class TestMaskingSuite:
    def test_masking_suite(self):
        """1000 seeded samples honor the guard; area target 1.0 gives full masks."""
        started = time.time()
        cfg = MaskSchemeConfig("multi-rectangles")  # defaults: 5, 0.15, size//10, size
        for seed in range(1000):
            mask, stats = sample_multi_rectangles_stats(128, cfg, make_rng(seed))
            assert np.isin(mask.bits, (0, 1)).all()
            assert stats.num_rects >= stats.min_num_rects
            assert stats.sum_rel_area >= 0.15

        cfg_full = MaskSchemeConfig("multi-rectangles", min_sum_rel_area=1.0)
        reference = full_mask(128)
        for seed in range(100):
            assert sample_multi_rectangles_stats(128, cfg_full, make_rng(seed))[0] == reference

        elapsed = time.time() - started
        assert elapsed < 5.0, f"masking suite took {elapsed:.2f}s (budget 5s)"
        passed("masking suite", f"1000/1000 guard-valid, 100/100 full masks, {elapsed:.2f}s")


class TestLossFallbackSuite:
    def test_loss_fallback_suite(self):
        """Full mask + lambda_gan_m=0 + lambda_cyc_m=0.5 reproduces the plain
        losses (cycle up to its exact 0.5 scale factor) within 1e-6."""
        gen = torch.Generator().manual_seed(100)
        a = torch.rand(2, 3, 8, 8, generator=gen) * 2 - 1
        rec = torch.rand(2, 3, 8, 8, generator=gen) * 2 - 1
        fake = torch.rand(2, 3, 8, 8, generator=gen) * 2 - 1
        real = torch.rand(2, 3, 8, 8, generator=gen) * 2 - 1
        m = torch.ones(1, 1, 8, 8)
        w = LossWeights(lambda_gan_m=0.0, lambda_cyc_m=0.5)
        d_full = lambda x: x.mean(dim=1, keepdim=True)[:, :, ::2, ::2] * 0.5 + 0.1
        d_masked = lambda x: x.mean(dim=1, keepdim=True)[:, :, ::2, ::2] * 0.25

        plain_gan = float(((d_full(fake) - 1.0) ** 2).mean())
        plain_cycle = float((a - rec).abs().mean())
        plain_idt = float((a - rec).abs().mean())
        plain_d = float(0.5 * (((d_full(real) - 1.0) ** 2).mean() + (d_full(fake) ** 2).mean()))

        checks = {
            "gan": (float(gan_loss_generator(d_full, d_masked, fake, m, w)), plain_gan),
            "cycle(x0.5)": (float(cycle_loss(a, rec, m, w)), 0.5 * plain_cycle),
            "identity": (float(identity_loss(a, rec)), plain_idt),
            "discriminator": (float(gan_loss_discriminator(d_full, real, fake)), plain_d),
        }
        for name, (got, want) in checks.items():
            assert abs(got - want) <= 1e-6, f"{name}: {got} vs {want}"
        passed("loss fallback suite",
               "; ".join(f"{k} |Δ|={abs(g - w):.2e}" for k, (g, w) in checks.items()))


class TestGradientChecks:
    def test_gradient_checks(self):
        """Analytic gradients match central differences (step 1e-3) within 1e-4."""
        step, rtol = 1e-3, 1e-4

        def finite_diff(fn, x):
            grad = torch.zeros_like(x)
            flat = x.view(-1)
            for idx in range(flat.numel()):
                orig = float(flat[idx])
                flat[idx] = orig + step
                up = float(fn(x))
                flat[idx] = orig - step
                down = float(fn(x))
                flat[idx] = orig
                grad.view(-1)[idx] = (up - down) / (2 * step)
            return grad

        gen = torch.Generator().manual_seed(200)
        a = (torch.rand(1, 2, 4, 4, generator=gen) * 2 - 1).double()
        rec = (torch.rand(1, 2, 4, 4, generator=gen) * 2 - 1).double()
        m = (torch.rand(1, 1, 4, 4, generator=gen) > 0.5).double()
        w = LossWeights(lambda_cyc_m=0.3)

        worst = 0.0
        for fn, x in ((lambda t: cycle_loss(a, t, m, w), rec),
                      (lambda t: identity_loss(a, t), rec)):
            x_ad = x.clone().requires_grad_(True)
            fn(x_ad).backward()
            numeric = finite_diff(fn, x.clone())
            rel = float((x_ad.grad - numeric).abs().max() / numeric.abs().max().clamp_min(1e-12))
            worst = max(worst, rel)
            assert rel < rtol, f"relative gradient error {rel:.2e}"
        passed("gradient checks", f"worst relative error {worst:.2e} (tolerance 1e-4)")


class TestMaskedDependence:
    def test_masked_dependence(self):
        """100 input pairs agreeing on the masked region give bit-equal core outputs."""
        generator = MaskedGenerator(32, base_width=8, n_blocks=1).eval()
        rng = make_rng(300)
        torch_gen = torch.Generator().manual_seed(300)
        for trial in range(100):
            kind = trial % 4
            if kind == 0:
                mask = sample_centered_square(32, float(rng.uniform(0.2, 1.0)))
            elif kind == 1:
                mask = sample_round(32, float(rng.uniform(0.2, 1.0)))
            elif kind == 2:
                mask = sample_mask_multi(rng)
            else:
                mask = Mask(rng.integers(0, 2, size=(32, 32)).astype(np.uint8))
            m = mask_to_tensor(mask)
            a1 = torch.rand(1, 3, 32, 32, generator=torch_gen) * 2 - 1
            noise = torch.rand(1, 3, 32, 32, generator=torch_gen) * 2 - 1
            a2 = a1 * m + noise * (1 - m)
            assert torch.equal(a1 * m, a2 * m)
            with torch.no_grad():
                out1 = generator.core(generator.core_input(a1, m))
                out2 = generator.core(generator.core_input(a2, m))
            assert torch.equal(out1, out2), f"core outputs diverge on trial {trial}"
        passed("masked-dependence check", "100/100 exactly equal core outputs")


def sample_mask_multi(rng):
    from maskcyclegan.masks import sample_multi_rectangles
    return sample_multi_rectangles(32, MaskSchemeConfig("multi-rectangles"), rng)


class TestFrechetOracle:
    def test_frechet_oracle(self):
        """Closed-form Gaussian identities pin the distance implementation."""
        rng = np.random.default_rng(400)
        feats = rng.normal(size=(64, 8))
        p_self = FeatureStats.fit(feats)
        d_self = frechet_distance(p_self, p_self)
        assert d_self <= 1e-6

        p = FeatureStats(mu=np.zeros(2), sigma=np.eye(2), n=10, extractor_id="oracle")
        q = FeatureStats(mu=np.array([3.0, 4.0]), sigma=np.eye(2), n=10, extractor_id="oracle")
        d_shift = frechet_distance(p, q)
        assert abs(d_shift - 25.0) <= 1e-4

        p4 = FeatureStats(mu=np.zeros(4), sigma=4.0 * np.eye(4), n=10, extractor_id="oracle")
        q4 = FeatureStats(mu=np.zeros(4), sigma=np.eye(4), n=10, extractor_id="oracle")
        d_scale = frechet_distance(p4, q4)
        assert abs(d_scale - 4.0) <= 1e-4
        passed("Fréchet oracle",
               f"self={d_self:.2e}, shift={d_shift:.6f} (25), scale={d_scale:.6f} (4)")


class TestTrainingSmoke:
    def test_training_smoke(self, smoke_runs):
        """500 iterations at 32x32: finite losses, decreasing cycle loss, bounded time."""
        reports = read_loss_log(smoke_runs.run1 / "losses.jsonl")
        assert len(reports) == 500
        for r in reports:
            values = (r.gan_a, r.gan_b, r.cyc_a, r.cyc_b, r.idt_a, r.idt_b,
                      r.total, r.d_a, r.d_b)
            assert all(np.isfinite(v) for v in values), f"non-finite loss at iter {r.iteration}"

        cyc = [r.cyc_a + r.cyc_b for r in reports]
        early = float(np.mean(cyc[:50]))
        late = float(np.mean(cyc[450:500]))
        assert late < early, f"cycle loss did not decrease: early {early:.4f} vs late {late:.4f}"
        assert smoke_runs.wall_seconds <= 1800, f"run took {smoke_runs.wall_seconds:.0f}s"
        passed("training smoke",
               f"cycle mean iters 1-50: {early:.4f} -> iters 451-500: {late:.4f}; "
               f"wall {smoke_runs.wall_seconds:.0f}s (budget 1800s)")


class TestFidMatrixMechanics:
    def test_fid_matrix_mechanics(self, smoke_runs, tmp_path, monkeypatch):
        """Matrix symmetry/zero diagonal; generated set farther than a real resample."""
        monkeypatch.setenv("MASKCYCLE_CACHE", str(tmp_path / "cache"))
        ckpt = load_checkpoint(smoke_runs.checkpoint)
        spec = DatasetSpec.from_layout(smoke_runs.data_root, resolution=32)
        matrix = fid_matrix(ckpt.generators, spec, scales=(0.5, 0.8, 1.0),
                            direction="b2a", extractor_id="toy-mnist")
        values = matrix.values
        asym = float(np.abs(values - values.T).max())
        diag = float(np.abs(np.diag(values)).max())
        assert asym <= 1e-6, f"asymmetry {asym}"
        assert diag <= 1e-6, f"diagonal {diag}"

        train_images = load_image_stack(smoke_runs.data_root / "trainA", 32)
        train_features = extract_features(train_images, "toy-mnist")
        half_idx = np.random.default_rng(500).permutation(train_features.shape[0])[:250]
        stats_train = FeatureStats.fit(train_features, "toy-mnist")
        stats_half = FeatureStats.fit(train_features[half_idx], "toy-mnist")
        fid_half = frechet_distance(stats_train, stats_half)

        sources = load_image_stack(smoke_runs.data_root / "testB", 32)
        generated = translate_set(ckpt.generators.b2a, sources, sample_centered_square(32, 1.0))
        stats_gen = FeatureStats.fit(extract_features(generated, "toy-mnist"), "toy-mnist")
        fid_gen = frechet_distance(stats_train, stats_gen)

        assert fid_half < fid_gen, f"resample {fid_half:.4f} not < generated {fid_gen:.4f}"
        passed("FID-matrix mechanics",
               f"asym {asym:.2e}, diag {diag:.2e}, "
               f"fid(train, half)={fid_half:.4f} < fid(train, gen@1.0)={fid_gen:.4f}")


class TestRoundMaskGeneralization:
    def test_round_mask_generalization(self, smoke_runs):
        """Round masks at the standard scales produce finite, in-range outputs."""
        ckpt = load_checkpoint(smoke_runs.checkpoint)
        sources = load_image_stack(smoke_runs.data_root / "testA", 32, limit=16)
        extrema = []
        for scale in (0.5, 0.8, 1.0):
            out = translate_set(ckpt.generators.a2b, sources, sample_round(32, scale))
            assert torch.isfinite(out).all(), f"non-finite output at round scale {scale}"
            lo, hi = float(out.min()), float(out.max())
            assert -1.0 <= lo and hi <= 1.0, f"out of range at scale {scale}: [{lo}, {hi}]"
            extrema.append(f"@{scale}: [{lo:.3f}, {hi:.3f}]")
        passed("round-mask generalization probe", "; ".join(extrema))


class TestDeterminism:
    def test_determinism(self, smoke_runs):
        """Identical seed and config give byte-identical loss logs across runs."""
        log1 = (smoke_runs.run1 / "losses.jsonl").read_text()
        log2 = (smoke_runs.run2 / "losses.jsonl").read_text()
        assert log1 == log2
        passed("determinism", f"two full smoke runs, identical {len(log1.splitlines())}-line logs")
