"""
Tests for the encoder, optimizer, trainer and negative sampling.
"""
