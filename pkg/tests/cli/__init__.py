"""
Tests for dataset files, the synthetic benchmark and the command line.
"""
