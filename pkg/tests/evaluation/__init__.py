"""
Tests for ranking metrics and split evaluation.
"""
