"""
Tests for the shared infrastructure: logging, errors and configuration.
"""
