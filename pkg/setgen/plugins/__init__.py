"""
Plugin system for SETGen.

This module implements a pluggy-based plugin system for image similarity
measures used by the registration and template losses.
"""
from setgen.plugins.manager import PluginManager

# Global plugin manager instance
plugin_manager = PluginManager()

__all__ = ['plugin_manager', 'PluginManager']
