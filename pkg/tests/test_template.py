"""
Tests for template generation, refinement and the baselines.
"""
import numpy as np
import pytest

from setgen.errors import ConfigError, GeometryError
from setgen.models import IntegrationConfig, SubjectGroup, TemplateMethod
from setgen.services.template_service import (PipelineOptions, ave_baseline, build_template,
                                              encode_group, generate_template, naive_average,
                                              refine_template, register_group)
from setgen.utils.reductions import ordered_mean, ordered_sum

FAST = PipelineOptions(integration=IntegrationConfig(3))


@pytest.mark.unit
class TestOrderedReductions:
    """Tests for order-independent sums."""

    def test_bitwise_invariant_to_order(self, rng):
        arrays = [rng.standard_normal((3, 3)) * 10.0 ** k for k in range(-6, 7)]
        forward = ordered_sum(arrays)
        backward_ = ordered_sum(arrays[::-1])
        shuffled = ordered_sum([arrays[i] for i in rng.permutation(len(arrays))])
        assert np.array_equal(forward, backward_)
        assert np.array_equal(forward, shuffled)

    def test_mean_value(self):
        assert ordered_mean([np.array([1.0]), np.array([3.0])])[0] == 2.0

    def test_empty(self):
        with pytest.raises(ValueError):
            ordered_sum([])


@pytest.mark.integration
class TestGenerateTemplate:
    """Tests for the one-shot template generator."""

    def test_result_layout(self, group, vae_params, reg_params):
        result = generate_template(group, vae_params, reg_params, FAST)
        assert result.method is TemplateMethod.SETGEN
        assert result.template.shape == (16, 16)
        assert len(result.registrations) == len(group)
        reg = result.registrations[0]
        assert reg.subject_id == 'sub-000'
        assert reg.velocity.shape == (2, 16, 16)
        assert reg.warped_labels.dtype == np.int64
        np.testing.assert_allclose(reg.displacement,
                                   reg.inverse - np.stack(np.meshgrid(
                                       np.arange(16.0), np.arange(16.0), indexing='ij')),
                                   atol=1e-12)
        assert result.provenance['group_size'] == 4

    def test_invariant_to_subject_order(self, group, vae_params, reg_params):
        forward = generate_template(group, vae_params, reg_params, FAST)
        reordered = group.reordered([2, 0, 3, 1])
        shuffled = generate_template(reordered, vae_params, reg_params, FAST)
        assert np.array_equal(forward.template, shuffled.template)
        by_id = {r.subject_id: r for r in shuffled.registrations}
        for reg in forward.registrations:
            assert np.array_equal(reg.displacement, by_id[reg.subject_id].displacement)

    def test_single_subject(self, group, vae_params, reg_params):
        single = SubjectGroup([group[0]])
        result = generate_template(single, vae_params, reg_params, FAST)
        assert len(result.registrations) == 1

    def test_threads_do_not_change_results(self, group, vae_params, reg_params):
        serial = generate_template(group, vae_params, reg_params, FAST)
        threaded = generate_template(group, vae_params, reg_params,
                                     PipelineOptions(IntegrationConfig(3), threads=3))
        assert np.array_equal(serial.template, threaded.template)
        for a, b in zip(serial.registrations, threaded.registrations):
            assert np.array_equal(a.velocity, b.velocity)

    def test_latents_are_deterministic(self, group, vae_params):
        first = encode_group(group, vae_params)
        second = encode_group(group, vae_params)
        for a, b in zip(first, second):
            assert np.array_equal(a, b)

    def test_refine_changes_method(self, group, vae_params, reg_params):
        result = generate_template(group, vae_params, reg_params, FAST)
        refined = refine_template(result, group, reg_params, FAST)
        assert refined.method is TemplateMethod.SETGEN_PLUS
        assert refined.provenance['refined_from'] == 'setgen'
        assert refined.template.min() >= 0.0 and refined.template.max() <= 1.0
        expected = ordered_mean([r.warped_image for r in result.registrations])
        np.testing.assert_allclose(refined.template, np.clip(expected, 0.0, 1.0))

    def test_template_geometry_mismatch(self, group, reg_params):
        with pytest.raises(GeometryError):
            register_group(group, np.zeros((8, 8)), reg_params, FAST)


@pytest.mark.integration
class TestBaselines:
    """Tests for the averaging baselines and method dispatch."""

    def test_naive_average(self, group, reg_params):
        result = naive_average(group, reg_params, FAST)
        assert result.method is TemplateMethod.NAIVE_AVERAGE
        assert np.array_equal(result.template, ordered_mean([s.intensities for s in group]))

    def test_ave_with_zero_iterations_is_naive(self, group, reg_params):
        ave = ave_baseline(group, reg_params, iters=0, options=FAST)
        naive = naive_average(group, reg_params, FAST)
        assert ave.method is TemplateMethod.AVE
        assert np.array_equal(ave.template, naive.template)
        assert ave.provenance['iterations'] == 0

    def test_ave_iterates(self, group, reg_params):
        result = ave_baseline(group, reg_params, iters=2, options=FAST)
        assert len(result.registrations) == len(group)
        with pytest.raises(ValueError):
            ave_baseline(group, reg_params, iters=-1)

    @pytest.mark.parametrize('method', ['setgen', 'setgen+', 'ave', 'naive-average'])
    def test_dispatch(self, group, vae_params, reg_params, method):
        result = build_template(method, group, reg_params, vae_params, FAST, ave_iters=1)
        assert result.method.value == method

    def test_setgen_needs_vae(self, group, reg_params):
        with pytest.raises(ConfigError):
            build_template('setgen', group, reg_params, None, FAST)

    def test_options_from_config(self, app):
        options = PipelineOptions.from_config(app.config, threads=2)
        assert options.threads == 2
        assert options.integration.steps == app.config['INTEGRATION_STEPS']
        assert options.integration.order == app.config['INTEGRATION_ORDER']
        assert options.integration.midpoint == app.config['INTEGRATION_MIDPOINT']
        assert options.convention == app.config['FIELD_CONVENTION']
