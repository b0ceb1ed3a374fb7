"""
Unit tests for the application factory, configuration and errors.
"""
import logging

import pytest

from setgen import SetGenApp, create_app
from setgen.config import TestingConfig, config
from setgen.errors import (CheckpointError, ConfigError, DataFormatError, GeometryError,
                           NumericalError, SetGenError, ShapeError)
from setgen.tensor import debug_enabled, set_debug


@pytest.mark.unit
class TestAppFactory:
    """Tests for create_app."""

    def test_testing_profile(self, app):
        assert isinstance(app, SetGenApp)
        assert app.testing
        assert app.config['VAE_ENCODER_WIDTHS'] == TestingConfig.VAE_ENCODER_WIDTHS
        assert app.config['THREADS'] == 1

    def test_overrides_apply(self):
        app = create_app('testing', overrides={'INTEGRATION_STEPS': 5})
        try:
            assert app.config['INTEGRATION_STEPS'] == 5
        finally:
            set_debug(False)

    def test_unknown_profile(self):
        with pytest.raises(KeyError):
            create_app('staging')

    def test_environment_default(self, monkeypatch):
        monkeypatch.setenv('SETGEN_ENV', 'testing')
        app = create_app()
        try:
            assert app.config_name == 'testing'
        finally:
            set_debug(False)

    def test_debug_checks_follow_profile(self):
        create_app('testing')
        assert debug_enabled()
        create_app('testing', overrides={'DEBUG_CHECKS': False})
        assert not debug_enabled()

    def test_plugins_initialized(self, app):
        assert [p['name'] for p in app.plugins.get_all_plugins()] == ['mse', 'ncc']

    def test_logger_name(self, app):
        assert app.logger is logging.getLogger('setgen')

    def test_profiles_registered(self):
        assert set(config) == {'development', 'production', 'testing', 'default'}
        assert config['default'] is config['production']


@pytest.mark.unit
class TestErrors:
    """Tests for the error hierarchy and exit codes."""

    @pytest.mark.parametrize('error,kind,code', [
        (ConfigError('x'), 'config', 2),
        (ShapeError('x'), 'shape', 3),
        (GeometryError('x'), 'geometry', 3),
        (DataFormatError('x'), 'data', 3),
        (CheckpointError('x'), 'checkpoint', 3),
        (NumericalError('x'), 'numerical', 4),
    ])
    def test_kinds_and_exit_codes(self, error, kind, code):
        assert isinstance(error, SetGenError)
        assert error.kind == kind
        assert error.exit_code == code

    def test_shape_error_names_dimension(self):
        error = ShapeError('bad', dimension='channels')
        assert error.dimension == 'channels'
        assert error.to_dict() == {'kind': 'shape', 'message': 'bad', 'dimension': 'channels'}

    def test_value_error_compatibility(self):
        assert isinstance(ConfigError('x'), ValueError)
        assert isinstance(NumericalError('x'), ArithmeticError)
