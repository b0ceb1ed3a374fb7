"""
Unit tests for synthetic phantom generation.
"""
from dataclasses import replace

import numpy as np
import pytest

from setgen.models import PhantomConfig
from setgen.services.phantom_service import band_centers, band_limits, gen_phantoms


@pytest.mark.unit
class TestPhantoms:
    """Tests for the phantom generator."""

    def test_group_layout(self, phantoms, phantom_config):
        assert len(phantoms.group) == phantom_config.n_subjects
        assert [s.subject_id for s in phantoms.group] == ['sub-000', 'sub-001', 'sub-002',
                                                           'sub-003']
        assert phantoms.velocities.shape == (4, 2, 16, 16)
        assert phantoms.center.intensities.shape == (16, 16)

    def test_seeded_generation_is_reproducible(self, phantom_config):
        first, second = gen_phantoms(phantom_config), gen_phantoms(phantom_config)
        for a, b in zip(first.group, second.group):
            np.testing.assert_array_equal(a.intensities, b.intensities)
            np.testing.assert_array_equal(a.labels, b.labels)

    def test_different_seeds_differ(self, phantom_config):
        other = replace(phantom_config, seed=12)
        a = gen_phantoms(phantom_config).group[0].intensities
        b = gen_phantoms(other).group[0].intensities
        assert not np.array_equal(a, b)

    def test_velocities_have_exactly_zero_mean(self, phantoms):
        assert np.all(phantoms.velocities.sum(axis=0) == 0.0)

    def test_velocity_magnitude(self, phantoms, phantom_config):
        assert np.max(np.abs(phantoms.velocities)) == pytest.approx(phantom_config.magnitude,
                                                                    rel=1e-4)

    def test_zero_magnitude_reproduces_center(self):
        cfg = PhantomConfig(n_subjects=3, spatial_dims=(16, 16), n_labels=2, smoothness=2.0,
                            magnitude=0.0, noise=0.02, seed=4)
        result = gen_phantoms(cfg)
        assert np.all(result.velocities == 0.0)
        for subject in result.group:
            np.testing.assert_array_equal(subject.labels, result.center.labels)
            assert np.max(np.abs(subject.intensities - result.center.intensities)) <= 0.02 + 1e-12

    def test_intensities_stay_in_label_bands(self, phantoms, phantom_config):
        for subject in phantoms.group:
            for label in subject.label_ids():
                low, high = band_limits(label, phantom_config.n_labels, phantom_config.noise)
                values = subject.intensities[subject.labels == label]
                assert values.min() >= low - 1e-12
                assert values.max() <= high + 1e-12
            background = subject.intensities[subject.labels == 0]
            assert background.max() <= phantom_config.noise + 1e-12

    def test_label_ids_within_range(self, phantoms, phantom_config):
        assert set(phantoms.group.label_ids()) <= set(range(1, phantom_config.n_labels + 1))
        assert phantoms.center.label_ids() == [1, 2]

    def test_band_centers_increase(self):
        centers = band_centers(4)
        assert centers[0] == 0.0
        assert np.all(np.diff(centers[1:]) > 0)
        assert centers[-1] == pytest.approx(0.9)

    def test_three_dimensional_group(self):
        cfg = PhantomConfig(n_subjects=2, spatial_dims=(8, 8, 8), n_labels=1, smoothness=2.0,
                            magnitude=0.5, noise=0.0, seed=0)
        result = gen_phantoms(cfg)
        assert result.group[0].intensities.shape == (8, 8, 8)
        assert np.all(result.velocities.sum(axis=0) == 0.0)
