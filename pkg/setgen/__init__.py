"""
Application factory for SETGen.

This module creates and configures the runtime context shared by the CLI
commands: resolved configuration, logging and the similarity plugin system.
"""
import os
import logging
from logging.handlers import RotatingFileHandler

from setgen.config import config

__version__ = '0.1.0'


class SetGenApp:
    """Configured runtime context (configuration, logger, plugins)."""

    def __init__(self, config_name, settings):
        self.config_name = config_name
        self.config = settings
        self.logger = logging.getLogger('setgen')
        self.plugins = None

    @property
    def debug(self):
        return bool(self.config.get('DEBUG'))

    @property
    def testing(self):
        return bool(self.config.get('TESTING'))

    def similarity(self, name=None):
        """
        Resolve a dissimilarity callable by plugin name.

        Args:
            name: Plugin name; defaults to the configured SIMILARITY

        Returns:
            callable: (Tensor, Tensor) -> scalar Tensor
        """
        return self.plugins.get_similarity(name or self.config['SIMILARITY'])


def create_app(config_name=None, overrides=None):
    """
    Application factory pattern.

    Args:
        config_name: Configuration name ('development', 'production', 'testing')
        overrides: Optional dict of settings applied after the class defaults

    Returns:
        Configured SetGenApp instance
    """
    if config_name is None:
        config_name = os.getenv('SETGEN_ENV', 'production')

    if config_name not in config:
        raise KeyError(
            f"Unknown configuration '{config_name}'. Choose from: {', '.join(sorted(config))}"
        )

    config_class = config[config_name]
    settings = {
        key: getattr(config_class, key)
        for key in dir(config_class)
        if key.isupper()
    }
    if overrides:
        settings.update(overrides)

    app = SetGenApp(config_name, settings)

    configure_numerics(app)
    configure_logging(app)
    initialize_plugins(app)

    return app


def configure_numerics(app):
    """Toggle finite-value checks in the tensor engine."""
    from setgen.tensor import set_debug
    set_debug(bool(app.config.get('DEBUG_CHECKS')))


def configure_logging(app):
    """Configure application logging."""
    logger = app.logger
    level = getattr(logging, str(app.config.get('LOG_LEVEL', 'INFO')).upper(), logging.INFO)

    if not app.debug and not app.testing:
        if not logger.handlers:
            if app.config['LOG_TO_STDOUT']:
                stream_handler = logging.StreamHandler()
                stream_handler.setLevel(level)
                logger.addHandler(stream_handler)
            else:
                log_dir = app.config['LOG_DIR']
                if not os.path.exists(log_dir):
                    os.makedirs(log_dir)
                file_handler = RotatingFileHandler(
                    os.path.join(log_dir, app.config['LOG_FILE']),
                    maxBytes=10240000,  # 10MB
                    backupCount=10
                )
                file_handler.setFormatter(logging.Formatter(
                    '%(asctime)s %(levelname)s: %(message)s '
                    '[in %(pathname)s:%(lineno)d]'
                ))
                file_handler.setLevel(level)
                logger.addHandler(file_handler)
        logger.setLevel(level)
        logger.info('SETGen startup')
    elif app.debug:
        logging.basicConfig(level=logging.DEBUG)


def initialize_plugins(app):
    """Initialize the similarity plugin system."""
    from setgen.plugins import plugin_manager
    plugin_manager.init_app(app)
    app.plugins = plugin_manager
    app.logger.debug(f'Loaded {len(plugin_manager.get_all_plugins())} similarity plugins')
