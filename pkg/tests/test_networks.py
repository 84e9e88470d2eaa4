import pytest
import torch

from semaforge.errors import ConfigError
from semaforge.gan.model import (
    DiscriminatorSpec,
    LossWeights,
    build_translator,
    load_checkpoint,
    save_checkpoint,
)
from semaforge.gan.networks import NLayerDiscriminator, ResnetGenerator
from semaforge.raster import DEFAULT_PALETTE


class TestGeneratorShapes:
    @pytest.mark.parametrize("size", [64, 128, 256])
    def test_cyclegan_generator_preserves_shape(self, size):
        model = build_translator("cyclegan", profile="toy", seed=0)
        x = torch.rand(1, 3, size, size)
        with torch.no_grad():
            out = model.G(x)
        assert out.shape == (1, 3, size, size)
        assert 0.0 <= float(out.min()) and float(out.max()) <= 1.0

    @pytest.mark.parametrize("size", [64, 128])
    def test_pix2pixhd_generator_preserves_shape(self, size):
        model = build_translator("pix2pixhd", profile="toy", seed=0)
        x = torch.rand(1, len(DEFAULT_PALETTE), size, size)
        with torch.no_grad():
            out = model.G(x)
        assert out.shape == (1, 3, size, size)

    def test_global_stage_is_half_resolution(self):
        model = build_translator("pix2pixhd", profile="toy", seed=0)
        x_full = torch.rand(1, len(DEFAULT_PALETTE), 64, 64)
        x_half = torch.nn.functional.interpolate(x_full, scale_factor=0.5, mode="nearest")
        with torch.no_grad():
            half_out = model.G.forward_global(x_half)
            full_out = model.G(x_full)
        assert half_out.shape[-1] * 2 == full_out.shape[-1]
        assert half_out.shape[-2] * 2 == full_out.shape[-2]

    def test_resnet_generator_feature_channels(self):
        gen = ResnetGenerator(3, 3, base_width=8, n_blocks=1, downsample_levels=2)
        feats = gen.forward_features(torch.rand(1, 3, 32, 32))
        assert feats.shape == (1, 8, 32, 32)


class TestDiscriminator:
    def test_probability_output(self):
        d = NLayerDiscriminator(3, base_width=8, n_layers=2)
        with torch.no_grad():
            probs = d(torch.rand(2, 3, 64, 64))
        assert probs.shape[0] == 2 and probs.shape[1] == 1
        assert 0.0 <= float(probs.min()) and float(probs.max()) <= 1.0

    def test_feature_taps_count_and_final(self):
        d = NLayerDiscriminator(3, base_width=8, n_layers=3)
        with torch.no_grad():
            taps = d.features(torch.rand(1, 3, 64, 64))
            probs = d(torch.rand(1, 3, 64, 64))
        assert len(taps) == 3 + 2  # n_layers stages + penultimate + prob head
        assert taps[-1].shape[1] == 1

    def test_pyramid_shares_structure(self):
        model = build_translator("pix2pixhd", profile="toy", seed=0)
        assert model.discriminator_spec.scales == 3
        states = [d.state_dict() for d in model.Ds]
        shapes = [{k: tuple(v.shape) for k, v in s.items()} for s in states]
        assert shapes[0] == shapes[1] == shapes[2]

    def test_scales_validated(self):
        with pytest.raises(ConfigError):
            DiscriminatorSpec(scales=0)


class TestModelAssembly:
    def test_cyclegan_carries_both_directions(self):
        model = build_translator("cyclegan", profile="toy", seed=0)
        assert model.F is not None and model.D_x is not None and model.D_y is not None

    def test_loss_weight_validation(self):
        with pytest.raises(ConfigError):
            LossWeights(lambda_cycle=-1.0)
        with pytest.raises(ConfigError):
            LossWeights(adversarial="hinge")

    def test_unknown_arch_rejected(self):
        with pytest.raises(ConfigError):
            build_translator("stylegan")

    def test_checkpoint_round_trip(self, tmp_path):
        model = build_translator("pix2pixhd", profile="toy", seed=5)
        save_checkpoint(model, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        x = torch.rand(1, len(DEFAULT_PALETTE), 64, 64)
        with torch.no_grad():
            a = model.eval_mode().G(x)
            b = loaded.eval_mode().G(x)
        assert torch.equal(a, b)

    def test_spec_json_is_portable_contract(self, tmp_path):
        import json

        model = build_translator("cyclegan", profile="toy", seed=0)
        save_checkpoint(model, tmp_path / "c")
        spec = json.loads((tmp_path / "c" / "spec.json").read_text())
        assert spec["arch"] == "cyclegan"
        assert spec["type"] == "translator"
        assert "palette" in spec and "loss_weights" in spec
        assert len(spec["generators"]) == 1
