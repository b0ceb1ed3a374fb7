"""
Builtin similarity plugins.
"""
