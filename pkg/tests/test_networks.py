import pytest
import torch

from maskcyclegan.masks import full_mask, sample_centered_square
from maskcyclegan.networks import (
    Checkpoint,
    CheckpointError,
    MaskedGenerator,
    PatchDiscriminator,
    build_models,
    load_checkpoint,
    mask_to_tensor,
    save_checkpoint,
    translate,
)

RES = 32


@pytest.fixture(scope="module")
def models():
    return build_models(RES, seed=42, base_width=16, n_blocks=2)


def random_batch(n=2, res=RES, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return (torch.rand(n, 3, res, res, generator=gen) * 2 - 1)


class TestGenerator:
    def test_core_sees_only_masked_region(self, models):
        gens, _ = models
        gen = gens.a2b.eval()
        m = mask_to_tensor(sample_centered_square(RES, 0.5))
        a1 = random_batch(seed=1)
        noise = random_batch(seed=2)
        a2 = a1 * m + noise * (1 - m)  # same masked region, different context
        with torch.no_grad():
            core1 = gen.core(gen.core_input(a1, m))
            core2 = gen.core(gen.core_input(a2, m))
        assert torch.equal(core1, core2)

    def test_output_shape_and_range(self, models):
        gens, _ = models
        a = random_batch()
        m = mask_to_tensor(full_mask(RES))
        with torch.no_grad():
            out = gens.a2b(a, m)
        assert out.shape == a.shape
        assert float(out.min()) >= -1.0 and float(out.max()) <= 1.0

    def test_full_mask_zeroes_context_branch(self, models):
        gens, _ = models
        gen = gens.a2b
        a = random_batch(seed=3)
        m = mask_to_tensor(full_mask(RES))
        with torch.no_grad():
            core_out = gen.core(gen.core_input(a, m))
            enc_in = gen.encoder_input(a, core_out, m)
        context_channels = enc_in[:, 3:6]
        assert not context_channels.any()
        mask_channel = enc_in[:, 6]
        assert mask_channel.eq(1).all()

    def test_untrained_forward_is_finite(self):
        gen = MaskedGenerator(RES, base_width=8, n_blocks=1)
        out = gen(random_batch(seed=4), mask_to_tensor(sample_centered_square(RES, 0.8)))
        assert torch.isfinite(out).all()

    def test_resolution_mismatch_rejected(self, models):
        gens, _ = models
        with pytest.raises(ValueError):
            gens.a2b(torch.zeros(1, 3, 16, 16), mask_to_tensor(full_mask(16)))

    def test_mask_size_mismatch_rejected(self, models):
        gens, _ = models
        with pytest.raises(ValueError):
            gens.a2b(random_batch(), mask_to_tensor(full_mask(16)))

    def test_same_seed_same_parameters(self):
        g1, _ = build_models(RES, seed=7, base_width=8, n_blocks=1)
        g2, _ = build_models(RES, seed=7, base_width=8, n_blocks=1)
        for p1, p2 in zip(g1.a2b.parameters(), g2.a2b.parameters()):
            assert torch.equal(p1, p2)

    def test_block_count_scales_with_resolution(self):
        n128 = sum(1 for m in MaskedGenerator(128).core.modules()
                   if type(m).__name__ == "ResidualBlock")
        n32 = sum(1 for m in MaskedGenerator(32).core.modules()
                  if type(m).__name__ == "ResidualBlock")
        assert (n128, n32) == (6, 3)


class TestDiscriminator:
    @pytest.mark.parametrize("res,grid", [(32, 1), (64, 3), (128, 7)])
    def test_score_grid_size(self, res, grid):
        d = PatchDiscriminator(res, base_width=8)
        out = d(torch.zeros(1, 3, res, res))
        assert out.shape == (1, 1, grid, grid)

    def test_eval_mode_deterministic(self, models):
        _, discs = models
        d = discs.a_full.eval()
        x = random_batch(seed=5)
        with torch.no_grad():
            assert torch.equal(d(x), d(x))

    def test_random_input_finite(self, models):
        _, discs = models
        assert torch.isfinite(discs.b_masked(random_batch(seed=6))).all()

    def test_resolution_mismatch_rejected(self, models):
        _, discs = models
        with pytest.raises(ValueError):
            discs.a_full(torch.zeros(1, 3, 64, 64))

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            PatchDiscriminator(16)


class TestCheckpoint:
    def _checkpoint(self, models, iteration=11):
        gens, discs = models
        return Checkpoint(
            generators=gens, discriminators=discs, optimizer_state=None,
            iteration=iteration, base_width=16, n_blocks=2,
        )

    def test_round_trip_forward_match(self, models, tmp_path):
        gens, _ = models
        path = tmp_path / "ckpt.pt"
        probe = random_batch(seed=8)
        m = mask_to_tensor(sample_centered_square(RES, 0.5))
        before = translate(gens.a2b, probe, sample_centered_square(RES, 0.5))
        save_checkpoint(self._checkpoint(models), path)
        loaded = load_checkpoint(path)
        after = translate(loaded.generators.a2b, probe, sample_centered_square(RES, 0.5))
        assert float((before - after).abs().max()) <= 1e-6

    def test_iteration_preserved(self, models, tmp_path):
        path = tmp_path / "ckpt.pt"
        save_checkpoint(self._checkpoint(models, iteration=123), path)
        assert load_checkpoint(path).iteration == 123

    def test_truncated_file_rejected(self, models, tmp_path):
        path = tmp_path / "ckpt.pt"
        save_checkpoint(self._checkpoint(models), path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope.pt")

    def test_parameter_counts_stable(self, models, tmp_path):
        gens, _ = models
        path = tmp_path / "ckpt.pt"
        save_checkpoint(self._checkpoint(models), path)
        loaded = load_checkpoint(path)
        count = lambda g: sum(p.numel() for p in g.parameters())
        assert count(loaded.generators.a2b) == count(gens.a2b)
        assert count(loaded.generators.b2a) == count(gens.b2a)


class TestTranslateHelper:
    def test_translate_accepts_mask_object(self, models):
        gens, _ = models
        out = translate(gens.a2b, random_batch(), sample_centered_square(RES, 0.8))
        assert out.shape == (2, 3, RES, RES)

    def test_translate_restores_training_mode(self, models):
        gens, _ = models
        gens.a2b.train()
        translate(gens.a2b, random_batch(), full_mask(RES))
        assert gens.a2b.training
        gens.a2b.eval()
