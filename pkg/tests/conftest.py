"""
Pytest configuration and fixtures for SETGen tests.

This module provides small architectures, phantom groups and numerical
helpers shared by the test modules.
"""
import numpy as np
import pytest
from click.testing import CliRunner

from setgen import create_app
from setgen.models import PhantomConfig, RegNetArch, VAEArch, init_params
from setgen.services.phantom_service import gen_phantoms
from setgen.tensor import DiffGraph, Tensor, backward, set_debug

SMALL_SHAPE = (16, 16)


@pytest.fixture(scope='session')
def app():
    """Create application for testing."""
    app = create_app('testing')
    yield app
    set_debug(False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def runner():
    """Create CLI test runner."""
    return CliRunner()


@pytest.fixture(scope='session')
def vae_arch():
    return VAEArch(input_shape=SMALL_SHAPE, encoder_widths=(4, 4, 8), decoder_widths=(4, 4, 4))


@pytest.fixture(scope='session')
def reg_arch():
    return RegNetArch(input_shape=SMALL_SHAPE, levels=3, base_filters=4)


@pytest.fixture
def vae_params(vae_arch):
    return init_params(vae_arch, seed=3)


@pytest.fixture
def reg_params(reg_arch):
    return init_params(reg_arch, seed=5)


@pytest.fixture(scope='session')
def phantom_config():
    return PhantomConfig(n_subjects=4, spatial_dims=SMALL_SHAPE, n_labels=2, smoothness=2.0,
                         magnitude=1.5, noise=0.02, seed=11)


@pytest.fixture(scope='session')
def phantoms(phantom_config):
    return gen_phantoms(phantom_config)


@pytest.fixture
def group(phantoms):
    return phantoms.group


def numeric_gradient(fn, array, eps=1e-6):
    """Central finite differences of a scalar function of one array."""
    grad = np.zeros_like(array)
    for index in np.ndindex(*array.shape):
        original = array[index]
        array[index] = original + eps
        plus = fn(array)
        array[index] = original - eps
        minus = fn(array)
        array[index] = original
        grad[index] = (plus - minus) / (2 * eps)
    return grad


def analytic_gradient(build, array):
    """Gradient of ``build(Tensor)`` with respect to the tensor, via the tape."""
    leaf = Tensor(array.copy(), requires_grad=True)
    with DiffGraph() as graph:
        loss = build(leaf)
    backward(loss, graph)
    return leaf.grad


def relative_error(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)


def check_gradient(build, array, tolerance=1e-4, eps=1e-6):
    """Assert that the tape gradient of ``build`` matches finite differences."""
    array = np.asarray(array, dtype=np.float64)
    expected = numeric_gradient(lambda a: build(Tensor(a)).item(), array.copy(), eps)
    actual = analytic_gradient(build, array)
    assert actual is not None
    assert relative_error(actual, expected) < tolerance
