"""
Plugin Manager for SETGen.

Manages similarity plugin registration, discovery and lookup.
"""
import logging
from typing import Any, Callable, Dict, List, Optional

import pluggy

from setgen.errors import ConfigError
from setgen.plugins.hookspecs import SimilaritySpec

logger = logging.getLogger(__name__)


class PluginManager:
    """Manages all similarity plugins."""

    def __init__(self):
        self.pm = pluggy.PluginManager("setgen")
        self.pm.add_hookspecs(SimilaritySpec)
        self._plugins_loaded = False
        self.app = None

    def init_app(self, app):
        """
        Initialize plugin system with the application context.

        Args:
            app: SetGenApp instance
        """
        self.app = app
        self.load_plugins()

    def load_plugins(self):
        """Load the builtin similarity plugins once."""
        if self._plugins_loaded:
            return

        from setgen.plugins.similarity.mse import MSESimilarityPlugin
        from setgen.plugins.similarity.ncc import NCCSimilarityPlugin

        self.pm.register(MSESimilarityPlugin())
        self.pm.register(NCCSimilarityPlugin())

        self._plugins_loaded = True
        logger.info(f"Loaded {len(self.pm.get_plugins())} plugins")

    def get_all_plugins(self) -> List[Dict[str, Any]]:
        """
        Get information about all registered plugins.

        Returns:
            list: Plugin information dictionaries, sorted by name
        """
        self.load_plugins()
        plugins = [p.get_info() for p in self.pm.get_plugins() if hasattr(p, 'get_info')]
        return sorted(plugins, key=lambda info: info['name'])

    def get_plugin_by_name(self, name: str) -> Optional[Any]:
        """
        Get a plugin by name.

        Args:
            name: Plugin name

        Returns:
            Plugin instance or None
        """
        self.load_plugins()
        for plugin in self.pm.get_plugins():
            if hasattr(plugin, 'get_info') and plugin.get_info().get('name') == name:
                return plugin
        return None

    def get_similarity(self, name: str) -> Callable:
        """
        Resolve a dissimilarity function.

        Args:
            name: Plugin name ('mse', 'ncc', ...)

        Returns:
            callable: (Tensor, Tensor) -> scalar Tensor

        Raises:
            ConfigError: If no plugin has that name
        """
        plugin = self.get_plugin_by_name(name)
        if plugin is None or not hasattr(plugin, 'dissimilarity'):
            choices = ', '.join(info['name'] for info in self.get_all_plugins())
            raise ConfigError(f"Unknown similarity '{name}'. Choose from: {choices}",
                              field='similarity')
        return plugin.dissimilarity
