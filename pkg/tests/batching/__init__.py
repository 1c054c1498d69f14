"""
Tests for records, nearest-neighbor search, k-means and shuffling.
"""
