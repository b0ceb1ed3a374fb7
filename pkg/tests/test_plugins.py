"""
Unit tests for the similarity plugin system.
"""
import numpy as np
import pytest

from setgen.errors import ConfigError
from setgen.plugins import PluginManager
from setgen.plugins.similarity.mse import MSESimilarityPlugin
from setgen.tensor import Tensor


@pytest.mark.unit
class TestPluginManager:
    """Tests for plugin registration and lookup."""

    def test_builtin_plugins_listed_by_name(self):
        manager = PluginManager()
        names = [info['name'] for info in manager.get_all_plugins()]
        assert names == ['mse', 'ncc']

    def test_plugin_info_fields(self):
        info = MSESimilarityPlugin().get_info()
        for key in ('name', 'display_name', 'description', 'version', 'category'):
            assert key in info
        assert info['category'] == 'similarity'

    def test_loading_twice_is_a_no_op(self):
        manager = PluginManager()
        manager.load_plugins()
        manager.load_plugins()
        assert len(manager.pm.get_plugins()) == 2

    def test_unknown_plugin_returns_none(self):
        assert PluginManager().get_plugin_by_name('mutual-information') is None

    def test_unknown_similarity_raises(self):
        with pytest.raises(ConfigError) as excinfo:
            PluginManager().get_similarity('mutual-information')
        assert excinfo.value.exit_code == 2
        assert 'mse' in str(excinfo.value)


@pytest.mark.unit
class TestSimilarityPlugins:
    """Tests for the builtin dissimilarities resolved through the app."""

    @pytest.mark.parametrize('name', ['mse', 'ncc'])
    def test_identical_images_score_zero(self, app, rng, name):
        image = Tensor(rng.uniform(size=(2, 1, 8, 8)))
        assert app.similarity(name)(image, image).item() == pytest.approx(0.0, abs=1e-5)

    @pytest.mark.parametrize('name', ['mse', 'ncc'])
    def test_nonnegative(self, app, rng, name):
        a = Tensor(rng.uniform(size=(1, 1, 8, 8)))
        b = Tensor(rng.uniform(size=(1, 1, 8, 8)))
        assert app.similarity(name)(a, b).item() >= 0.0

    def test_ncc_ignores_affine_intensity_change(self, app, rng):
        a = rng.uniform(size=(1, 1, 8, 8))
        score = app.similarity('ncc')(Tensor(a), Tensor(0.5 * a + 0.2)).item()
        assert score == pytest.approx(0.0, abs=1e-5)

    def test_default_similarity_is_configured(self, app):
        assert app.similarity() == app.plugins.get_similarity(app.config['SIMILARITY'])

    def test_shape_mismatch(self, app):
        from setgen.errors import ShapeError
        with pytest.raises(ShapeError):
            app.similarity('mse')(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 4, 5))))
