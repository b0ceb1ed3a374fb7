"""
Test suite for SETGen.
"""
