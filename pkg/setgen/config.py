"""
Application configuration classes.
"""
import os

from dotenv import load_dotenv

load_dotenv()


def _env_int(name, default):
    return int(os.environ.get(name, default))


def _env_float(name, default):
    return float(os.environ.get(name, default))


def _env_bool(name, default=False):
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


def _env_widths(name, default):
    value = os.environ.get(name, default)
    return tuple(int(part) for part in value.split(',') if part.strip())


class Config:
    """Base configuration."""

    DEBUG = False
    TESTING = False

    # Runtime
    THREADS = _env_int('SETGEN_THREADS', 1)
    DEBUG_CHECKS = _env_bool('SETGEN_DEBUG')

    # Logging
    LOG_TO_STDOUT = _env_bool('LOG_TO_STDOUT')
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_DIR = os.environ.get('LOG_DIR', 'logs')
    LOG_FILE = os.environ.get('LOG_FILE', 'setgen.log')

    # Deformation model
    INTEGRATION_STEPS = _env_int('INTEGRATION_STEPS', 7)
    # 3: cubic squaring compositions, 1: multilinear
    INTEGRATION_ORDER = _env_int('INTEGRATION_ORDER', 3)
    INTEGRATION_MIDPOINT = _env_bool('INTEGRATION_MIDPOINT', True)
    LEAKY_SLOPE = _env_float('LEAKY_SLOPE', 0.2)

    # VAE architecture (widths sized for CPU training)
    VAE_ENCODER_WIDTHS = _env_widths('VAE_ENCODER_WIDTHS', '32,32,32,64')
    VAE_DECODER_WIDTHS = _env_widths('VAE_DECODER_WIDTHS', '32,32,32,32')

    # Registration network
    REG_BASE_FILTERS = _env_int('REG_BASE_FILTERS', 16)
    REG_LEVELS = _env_int('REG_LEVELS', 4)
    REG_FINAL_INIT_SCALE = _env_float('REG_FINAL_INIT_SCALE', 1e-5)

    # Loss weights
    LAMBDA_SIM = _env_float('LAMBDA_SIM', 300.0)
    LAMBDA_KL = _env_float('LAMBDA_KL', 0.0002)
    LAMBDA_EVEN = _env_float('LAMBDA_EVEN', 5.0)
    LAMBDA_TEMP = _env_float('LAMBDA_TEMP', 100.0)
    LAMBDA_WARPED = _env_float('LAMBDA_WARPED', 200.0)
    SIMILARITY = os.environ.get('SIMILARITY', 'mse')
    # 'template-moving': v = Reg(template, subject); 'subject-moving': v = Reg(subject, template)
    FIELD_CONVENTION = os.environ.get('FIELD_CONVENTION', 'template-moving')

    # Siamese training
    LEARNING_RATE = _env_float('LEARNING_RATE', 1e-4)
    MIN_LEARNING_RATE = _env_float('MIN_LEARNING_RATE', 0.0)
    SCHEDULE_PERIOD_EPOCHS = _env_int('SCHEDULE_PERIOD_EPOCHS', 4)
    EPOCHS = _env_int('EPOCHS', 3)
    PAIRS_PER_EPOCH = _env_int('PAIRS_PER_EPOCH', 500)
    CHECKPOINT_EVERY = _env_int('CHECKPOINT_EVERY', 250)
    LOG_EVERY = _env_int('LOG_EVERY', 50)

    # Registration pretraining
    PRETRAIN_ITERS = _env_int('PRETRAIN_ITERS', 2000)
    REG_LEARNING_RATE = _env_float('REG_LEARNING_RATE', 1e-3)
    REG_SMOOTHNESS = _env_float('REG_SMOOTHNESS', 0.01)
    REG_VALIDATION_PAIRS = _env_int('REG_VALIDATION_PAIRS', 16)

    # Baselines
    AVE_ITERATIONS = _env_int('AVE_ITERATIONS', 6)


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    TESTING = False
    DEBUG_CHECKS = True
    LOG_TO_STDOUT = True


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False
    TESTING = False


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    DEBUG_CHECKS = True
    LOG_TO_STDOUT = True
    THREADS = 1
    VAE_ENCODER_WIDTHS = (4, 4, 8)
    VAE_DECODER_WIDTHS = (4, 4, 4)
    REG_BASE_FILTERS = 4
    REG_LEVELS = 3
    EPOCHS = 1
    PAIRS_PER_EPOCH = 4
    PRETRAIN_ITERS = 4
    CHECKPOINT_EVERY = 2
    LOG_EVERY = 1
    REG_VALIDATION_PAIRS = 2
    AVE_ITERATIONS = 1


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': ProductionConfig
}
