"""
Tests for the contrastive loss family and its gradients.
"""
