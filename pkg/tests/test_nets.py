import numpy as np
import pytest
import torch

from volsynth.nets import (
    DenseBlock,
    Discriminator,
    DiscriminatorConfig,
    Encoder,
    EncoderConfig,
    Generator,
    GeneratorConfig,
    NetParams,
    PAPER_DISCRIMINATOR,
    PAPER_GENERATOR,
    PlainBlock,
    ResidualBlock,
    TransitionDown,
    init_params,
    reparameterize,
)


def small_gen(depth=2, **kw):
    kw.setdefault("base_channels", 4)
    kw.setdefault("growth_rate", 2)
    kw.setdefault("latent_dim", 4)
    kw.setdefault("extra_plain_stage", False)
    return GeneratorConfig(depth=depth, **kw)


class TestDenseBlock:
    def test_channel_accounting(self):
        block = DenseBlock(8, growth=4, layers=2)
        assert block.out_channels == 16
        out = block(torch.randn(1, 8, 6, 6, 6))
        assert out.shape == (1, 16, 6, 6, 6)

    def test_spatial_preserved(self):
        block = DenseBlock(3, growth=2, layers=3)
        out = block(torch.randn(2, 3, 16, 16, 16))
        assert out.shape[2:] == (16, 16, 16)

    def test_input_passes_through_concat(self):
        # The block output must contain the input verbatim (dense concat).
        block = DenseBlock(2, growth=1, layers=1, norm="none")
        x = torch.randn(1, 2, 5, 5, 5)
        out = block(x)
        assert torch.equal(out[:, :2], x)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            DenseBlock(4, growth=0, layers=1)
        with pytest.raises(ValueError):
            DenseBlock(4, growth=2, layers=0)

    def test_channel_mismatch_error(self):
        block = DenseBlock(4, growth=2, layers=1)
        with pytest.raises(ValueError):
            block(torch.randn(1, 5, 6, 6, 6))

    @pytest.mark.parametrize("cls", [ResidualBlock, PlainBlock])
    def test_variant_blocks_same_growth(self, cls):
        block = cls(6, growth=3, layers=2)
        out = block(torch.randn(1, 6, 8, 8, 8))
        assert out.shape == (1, 12, 8, 8, 8)


class TestGenerator:
    @pytest.mark.parametrize("depth", [2, 3])
    @pytest.mark.parametrize("extent", [16, 32])
    def test_shape_preservation_and_range(self, depth, extent):
        cfg = small_gen(depth=depth)
        gen = init_params(Generator(cfg), 1)
        x = torch.randn(2, 1, extent, extent, extent)
        z = torch.randn(2, cfg.latent_dim)
        with torch.no_grad():
            out = gen(x, z)
        assert out.shape == x.shape
        assert out.abs().max().item() < 1.0

    @pytest.mark.parametrize("variant", ["dense", "residual", "plain"])
    def test_variants_run(self, variant):
        cfg = small_gen(variant=variant)
        gen = init_params(Generator(cfg), 1)
        out = gen(torch.randn(1, 1, 16, 16, 16), torch.randn(1, 4))
        assert out.shape == (1, 1, 16, 16, 16)

    def test_latent_changes_output_at_init(self):
        cfg = small_gen()
        gen = init_params(Generator(cfg), 1)
        x = torch.randn(1, 1, 16, 16, 16)
        with torch.no_grad():
            a = gen(x, torch.full((1, 4), -2.0))
            b = gen(x, torch.full((1, 4), 2.0))
        assert (a - b).abs().max().item() > 0.0

    def test_indivisible_extent_rejected(self):
        gen = Generator(small_gen(depth=3))
        with pytest.raises(ValueError, match="divisible"):
            gen(torch.randn(1, 1, 20, 20, 20), torch.randn(1, 4))

    def test_latent_dim_mismatch_rejected(self):
        gen = Generator(small_gen())
        with pytest.raises(ValueError, match="latent"):
            gen(torch.randn(1, 1, 16, 16, 16), torch.randn(1, 7))

    def test_full_scale_preset_layer_counts(self):
        gen = Generator(PAPER_GENERATOR)
        blocks = [m for m in gen.modules() if isinstance(m, DenseBlock)]
        transitions = [m for m in gen.modules() if isinstance(m, TransitionDown)]
        upsamples = list(gen.upsamples)
        assert len(blocks) == 13
        assert len(transitions) == 7
        assert len(upsamples) == 7

    def test_every_stage_traversed(self):
        cfg = small_gen(depth=3)
        gen = init_params(Generator(cfg), 1)
        counts = {"transition": 0, "upsample": 0}
        for module in gen.transitions:
            module.register_forward_hook(lambda *a: counts.__setitem__("transition", counts["transition"] + 1))
        for module in gen.upsamples:
            module.register_forward_hook(lambda *a: counts.__setitem__("upsample", counts["upsample"] + 1))
        gen(torch.randn(1, 1, 16, 16, 16), torch.randn(1, 4))
        assert counts == {"transition": 3, "upsample": 3}

    def test_2d_mode(self):
        cfg = small_gen(dims=2)
        gen = init_params(Generator(cfg), 1)
        out = gen(torch.randn(3, 1, 16, 16), torch.randn(3, 4))
        assert out.shape == (3, 1, 16, 16)


class TestDiscriminator:
    def test_score_grid_arithmetic(self):
        # Four stride-2 stages: 32^3 -> 2^3 score grid, scores in (0, 1).
        disc = init_params(Discriminator(DiscriminatorConfig(channel_schedule=(4, 8, 12, 16))), 1)
        scores = disc(torch.randn(1, 1, 32, 32, 32))
        assert scores.shape == (1, 1, 2, 2, 2)
        assert 0.0 < scores.min().item() and scores.max().item() < 1.0

    def test_zero_head_gives_half(self):
        disc = init_params(Discriminator(DiscriminatorConfig(channel_schedule=(4, 8))), 1)
        with torch.no_grad():
            disc.head.weight.zero_()
            disc.head.bias.zero_()
        scores = disc(torch.randn(2, 1, 16, 16, 16))
        assert torch.all(scores == 0.5)

    def test_full_scale_channel_widths(self):
        disc = Discriminator(PAPER_DISCRIMINATOR)
        widths = [stage[0].out_channels for stage in disc.stages]
        assert widths == [32, 64, 128, 256]

    def test_small_input_rejected(self):
        disc = Discriminator(DiscriminatorConfig(channel_schedule=(4, 8, 12, 16)))
        with pytest.raises(ValueError, match="receptive"):
            disc(torch.randn(1, 1, 8, 8, 8))

    def test_schedule_must_increase(self):
        with pytest.raises(ValueError):
            DiscriminatorConfig(channel_schedule=(8, 8))

    def test_conditioned_variant(self):
        cfg = DiscriminatorConfig(channel_schedule=(4, 8), condition_on_source=True)
        disc = init_params(Discriminator(cfg), 1)
        y = torch.randn(1, 1, 16, 16, 16)
        x = torch.randn(1, 1, 16, 16, 16)
        assert disc(y, x).shape == (1, 1, 4, 4, 4)
        with pytest.raises(ValueError):
            disc(y)

    def test_unconditioned_rejects_source(self):
        disc = Discriminator(DiscriminatorConfig(channel_schedule=(4, 8)))
        y = torch.randn(1, 1, 16, 16, 16)
        with pytest.raises(ValueError):
            disc(y, y)


class TestEncoder:
    def test_output_shapes(self):
        cfg = EncoderConfig(block_schedule=(1, 1), base_channels=4, latent_dim=8)
        enc = init_params(Encoder(cfg), 1)
        mu, logvar = enc(torch.randn(2, 1, 32, 32, 32))
        assert mu.shape == (2, 8) and logvar.shape == (2, 8)
        assert torch.isfinite(mu).all() and torch.isfinite(logvar).all()

    def test_zero_heads_give_standard_normal_code(self):
        cfg = EncoderConfig(block_schedule=(1,), base_channels=4, latent_dim=4)
        enc = init_params(Encoder(cfg), 1)
        with torch.no_grad():
            enc.mu_head.weight.zero_()
            enc.mu_head.bias.zero_()
            enc.logvar_head.weight.zero_()
            enc.logvar_head.bias.zero_()
        mu, logvar = enc(torch.randn(2, 1, 16, 16, 16))
        assert torch.all(mu == 0.0) and torch.all(logvar == 0.0)

    def test_batch_independence(self):
        cfg = EncoderConfig(block_schedule=(1, 1), base_channels=4, latent_dim=4)
        enc = init_params(Encoder(cfg), 1)
        enc.eval()
        batch = torch.randn(4, 1, 16, 16, 16)
        with torch.no_grad():
            mu_b, logvar_b = enc(batch)
            for i in range(4):
                mu_i, logvar_i = enc(batch[i : i + 1])
                assert torch.allclose(mu_i[0], mu_b[i], atol=1e-5)
                assert torch.allclose(logvar_i[0], logvar_b[i], atol=1e-5)

    def test_too_small_input(self):
        enc = Encoder(EncoderConfig(block_schedule=(1, 1, 1, 1), base_channels=4))
        with pytest.raises(ValueError):
            enc(torch.randn(1, 1, 8, 8, 8))


class TestInit:
    def test_deterministic(self):
        cfg = small_gen()
        a = NetParams.from_module(init_params(Generator(cfg), seed=5), 5)
        b = NetParams.from_module(init_params(Generator(cfg), seed=5), 5)
        assert list(a.arrays) == list(b.arrays)
        for name in a.arrays:
            assert np.array_equal(a.arrays[name], b.arrays[name]), name

    def test_seed_changes_weights(self):
        cfg = small_gen()
        a = NetParams.from_module(init_params(Generator(cfg), seed=5), 5)
        b = NetParams.from_module(init_params(Generator(cfg), seed=6), 6)
        assert any(not np.array_equal(a.arrays[n], b.arrays[n]) for n in a.arrays)

    def test_norm_affine_init(self):
        gen = init_params(Generator(small_gen()), 1)
        for m in gen.modules():
            if isinstance(m, torch.nn.InstanceNorm3d) and m.affine:
                assert torch.all(m.weight == 1.0)
                assert torch.all(m.bias == 0.0)

    def test_conv_weight_scale(self):
        gen = init_params(Generator(GeneratorConfig()), 1)
        stds = [
            m.weight.std().item()
            for m in gen.modules()
            if isinstance(m, torch.nn.Conv3d) and m.weight.numel() > 500
        ]
        assert all(0.015 < s < 0.025 for s in stds)


class TestReparameterize:
    def test_tiny_variance_collapses_to_mu(self):
        mu = torch.randn(4, 8)
        logvar = torch.full((4, 8), -40.0)
        z = reparameterize(mu, logvar, torch.Generator().manual_seed(0))
        assert (z - mu).abs().max().item() < 1e-8

    def test_standard_code_reproduces_raw_draw(self):
        gen_a = torch.Generator().manual_seed(123)
        z = reparameterize(torch.zeros(3, 5), torch.zeros(3, 5), gen_a)
        gen_b = torch.Generator().manual_seed(123)
        eps = torch.randn(3, 5, generator=gen_b)
        assert torch.equal(z, eps)

    def test_monte_carlo_mean(self):
        gen = torch.Generator().manual_seed(7)
        z = reparameterize(torch.ones(100_000, 1), torch.zeros(100_000, 1), gen)
        assert abs(z.mean().item() - 1.0) < 0.01

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            reparameterize(torch.zeros(2, 3), torch.zeros(3, 2))


class TestNetParams:
    def test_container_round_trip(self, tmp_path):
        cfg = small_gen()
        gen = init_params(Generator(cfg), 3)
        params = NetParams.from_module(gen, 3)
        path = tmp_path / "g.bpak"
        params.save(path, {"kind": "generator"})
        loaded, config_doc = NetParams.load(path)
        assert config_doc == {"kind": "generator"}
        assert loaded.seed == 3
        for name in params.arrays:
            assert np.array_equal(loaded.arrays[name], params.arrays[name])

    def test_load_into_reproduces_forward(self, tmp_path):
        cfg = small_gen()
        gen = init_params(Generator(cfg), 3)
        params = NetParams.from_module(gen, 3)
        other = init_params(Generator(cfg), 99)
        params.load_into(other)
        x, z = torch.randn(1, 1, 16, 16, 16), torch.randn(1, 4)
        with torch.no_grad():
            assert torch.equal(gen(x, z), other(x, z))

    def test_rejects_non_finite(self):
        from collections import OrderedDict

        with pytest.raises(ValueError):
            NetParams(OrderedDict(w=np.array([np.nan])), seed=0)
