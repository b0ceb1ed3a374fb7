"""
Unit tests for networks, parameters, checkpoints and data models.
"""
import numpy as np
import pytest

from setgen.errors import CheckpointError, ConfigError, DataFormatError, GeometryError, ShapeError
from setgen.models import (GroupEvalReport, PhantomConfig, RegNetArch, RegNetParams, RunManifest,
                           SubjectGroup, SubjectVolume, TemplateMethod, VAEArch, VAEParams,
                           VolumeGeometry, decode, encode, init_params, load_checkpoint,
                           predict_velocity, save_checkpoint)
from setgen.models.checkpoint import decode_checkpoint, encode_checkpoint
from setgen.tensor import Tensor


@pytest.mark.unit
class TestVAE:
    """Tests for the convolutional VAE."""

    def test_latent_shape(self, vae_arch):
        assert vae_arch.latent_channels == 4
        assert vae_arch.latent_shape == (4, 2, 2)

    def test_encode_decode_shapes(self, vae_params, group):
        code = encode(Tensor(group.intensity_stack()), vae_params)
        assert code.mu.shape == (4, 4, 2, 2)
        assert code.z is code.mu
        out = decode(code.z, vae_params)
        assert out.shape == (4, 1, 16, 16)
        assert np.all((out.data > 0.0) & (out.data < 1.0))

    def test_sampling_is_seeded(self, vae_params, group):
        x = group[0].as_tensor()
        a = encode(x, vae_params, np.random.default_rng(0), sample=True).z.data
        b = encode(x, vae_params, np.random.default_rng(0), sample=True).z.data
        np.testing.assert_array_equal(a, b)

    def test_sampling_needs_rng(self, vae_params, group):
        with pytest.raises(ValueError):
            encode(group[0].as_tensor(), vae_params, sample=True)

    def test_rejects_wrong_input(self, vae_params):
        with pytest.raises(ShapeError):
            encode(Tensor(np.zeros((1, 1, 8, 8))), vae_params)

    def test_arch_validation(self):
        with pytest.raises(ConfigError):
            VAEArch(input_shape=(12, 12), encoder_widths=(4, 4, 8), decoder_widths=(4, 4, 4))
        with pytest.raises(ConfigError):
            VAEArch(input_shape=(16, 16), encoder_widths=(4, 4, 7), decoder_widths=(4, 4, 4))
        with pytest.raises(ConfigError):
            VAEArch(input_shape=(16, 16), encoder_widths=(4, 8), decoder_widths=(4, 4, 4))

    def test_init_is_deterministic(self, vae_arch):
        a = init_params(vae_arch, seed=9).encoder['layer0.weight'].data
        b = init_params(vae_arch, seed=9).encoder['layer0.weight'].data
        np.testing.assert_array_equal(a, b)

    def test_named_parameters_are_unique(self, vae_params):
        names = list(vae_params.named_parameters())
        assert len(names) == len(set(names))
        assert 'encoder.layer0.weight' in names and 'decoder.layer0.weight' in names

    def test_three_dimensional(self):
        arch = VAEArch(input_shape=(8, 8, 8), encoder_widths=(2, 4), decoder_widths=(2, 2))
        params = init_params(arch, seed=0)
        out = decode(encode(Tensor(np.full((1, 1, 8, 8, 8), 0.5)), params).z, params)
        assert out.shape == (1, 1, 8, 8, 8)


@pytest.mark.unit
class TestRegNet:
    """Tests for the registration network."""

    def test_velocity_shape_and_small_init(self, reg_params, group):
        v = predict_velocity(group[0].as_tensor(), group[1].as_tensor(), reg_params)
        assert v.values.shape == (1, 2, 16, 16)
        assert np.max(np.abs(v.numpy())) < 1e-2

    def test_geometry_mismatch(self, reg_params):
        with pytest.raises(GeometryError):
            predict_velocity(Tensor(np.zeros((1, 1, 16, 16))), Tensor(np.zeros((1, 1, 8, 8))),
                             reg_params)
        with pytest.raises(GeometryError):
            predict_velocity(Tensor(np.zeros((1, 1, 8, 8))), Tensor(np.zeros((1, 1, 8, 8))),
                             reg_params)

    def test_levels_must_divide_input(self):
        with pytest.raises(ConfigError):
            RegNetArch(input_shape=(18, 18), levels=3)
        with pytest.raises(ConfigError):
            RegNetArch(input_shape=(16, 16), levels=7)

    def test_freeze(self, reg_params):
        reg_params.freeze()
        assert reg_params.frozen
        reg_params.unfreeze()
        assert not reg_params.frozen


@pytest.mark.unit
class TestCheckpoint:
    """Tests for the binary checkpoint format."""

    def test_vae_round_trip(self, vae_params, tmp_path):
        path = str(tmp_path / 'vae.ckpt')
        save_checkpoint(vae_params.to_checkpoint({'seed': 3}), path)
        restored = VAEParams.from_checkpoint(load_checkpoint(path, 'vae'))
        assert restored.arch == vae_params.arch
        for name, tensor in vae_params.named_parameters().items():
            np.testing.assert_array_equal(restored.named_parameters()[name].data, tensor.data)

    def test_regnet_round_trip(self, reg_params, tmp_path):
        path = str(tmp_path / 'reg.ckpt')
        save_checkpoint(reg_params.to_checkpoint(), path)
        restored = RegNetParams.from_checkpoint(load_checkpoint(path))
        np.testing.assert_array_equal(restored['velocity.weight'].data,
                                      reg_params['velocity.weight'].data)

    def test_saving_is_deterministic(self, reg_params, tmp_path):
        first = save_checkpoint(reg_params.to_checkpoint({'a': 1}), str(tmp_path / 'a.ckpt'))
        second = save_checkpoint(reg_params.to_checkpoint({'a': 1}), str(tmp_path / 'b.ckpt'))
        assert first == second
        assert (tmp_path / 'a.ckpt').read_bytes() == (tmp_path / 'b.ckpt').read_bytes()

    def test_wrong_kind(self, reg_params, tmp_path):
        path = str(tmp_path / 'reg.ckpt')
        save_checkpoint(reg_params.to_checkpoint(), path)
        with pytest.raises(CheckpointError):
            load_checkpoint(path, 'vae')

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(str(tmp_path / 'absent.ckpt'))

    def test_corrupted_blob(self, reg_params):
        payload = bytearray(encode_checkpoint(reg_params.to_checkpoint()))
        payload[-1] ^= 0xFF
        with pytest.raises(CheckpointError):
            decode_checkpoint(bytes(payload))

    def test_truncated(self, reg_params):
        payload = encode_checkpoint(reg_params.to_checkpoint())
        with pytest.raises(CheckpointError):
            decode_checkpoint(payload[:4])
        with pytest.raises(CheckpointError):
            decode_checkpoint(payload[:-8])

    def test_missing_tensor(self, reg_params):
        checkpoint = reg_params.to_checkpoint()
        del checkpoint.tensors['velocity.bias']
        with pytest.raises(CheckpointError):
            RegNetParams.from_checkpoint(decode_checkpoint(encode_checkpoint(checkpoint)))


@pytest.mark.unit
class TestVolumes:
    """Tests for subject, group and geometry models."""

    def test_geometry_limits(self):
        with pytest.raises(GeometryError):
            VolumeGeometry((3, 8))
        with pytest.raises(GeometryError):
            VolumeGeometry((8,))
        assert VolumeGeometry((4, 5, 6)).num_voxels == 120

    def test_intensity_range(self):
        with pytest.raises(DataFormatError):
            SubjectVolume('s', np.full((8, 8), 1.5))

    def test_label_shape(self):
        with pytest.raises(GeometryError):
            SubjectVolume('s', np.zeros((8, 8)), np.zeros((8, 4), dtype=int))

    def test_group_geometry(self):
        with pytest.raises(GeometryError):
            SubjectGroup([SubjectVolume('a', np.zeros((8, 8))), SubjectVolume('b', np.zeros((8, 6)))])
        with pytest.raises(ConfigError):
            SubjectGroup([])

    def test_group_label_ids(self, group):
        assert group.has_labels
        assert group.label_ids() == [1, 2]

    def test_phantom_config_limits(self):
        with pytest.raises(ConfigError):
            PhantomConfig(n_subjects=1)
        with pytest.raises(ConfigError):
            PhantomConfig(spatial_dims=(16, 16), magnitude=3.0)


@pytest.mark.unit
class TestResults:
    """Tests for result records."""

    def test_method_parse(self):
        assert TemplateMethod.parse('setgen+') is TemplateMethod.SETGEN_PLUS
        with pytest.raises(DataFormatError):
            TemplateMethod.parse('median')

    def test_report_json(self):
        report = GroupEvalReport(method='setgen', group_size=4, label_count=2, dice=0.8,
                                 per_label_dice={'1': 0.9, '2': 0.7}, centrality=1.5,
                                 avg_disp=2.0, runtime_seconds=0.1)
        assert GroupEvalReport.from_json(report.to_json()) == report

    def test_manifest_write_read(self, tmp_path):
        path = str(tmp_path / 'run.json')
        RunManifest(subcommand='slice', argv=['slice'], config={'THREADS': 1}).write(path)
        manifest = RunManifest.read(path)
        assert manifest.subcommand == 'slice'
        assert manifest.finished_at

    def test_manifest_unreadable(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{not json')
        with pytest.raises(DataFormatError):
            RunManifest.read(str(path))
