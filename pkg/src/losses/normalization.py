"""
Embedding normalization applied before similarity computation.

Modes:
    none          identity
    row_l2        every row scaled to unit L2 norm (dot products become cosines)
    coord_l2      every column scaled to unit L2 norm over the batch
    coord_minmax  every column mapped affinely onto [0, 1] over the batch

Column statistics are always taken over the current batch only.
"""

from typing import Any, Tuple

import numpy as np

from ..common.error_handler import ContractError, DegenerateInputError, ShapeError
from .dense_core import as_embedding_matrix

NORMALIZATION_MODES: Tuple[str, ...] = ("none", "row_l2", "coord_l2", "coord_minmax")

# Value a constant column takes under coord_minmax.
CONSTANT_COLUMN_VALUE = 0.5


def _check_mode(mode: str) -> None:
    if mode not in NORMALIZATION_MODES:
        raise ContractError(f"Unknown normalization mode '{mode}'; expected one of {NORMALIZATION_MODES}")


def _l2_norms(M: np.ndarray, axis: int, what: str) -> np.ndarray:
    norms = np.sqrt(np.sum(M * M, axis=axis, keepdims=True))
    if np.any(norms == 0.0):
        index = int(np.flatnonzero(norms.ravel() == 0.0)[0])
        raise DegenerateInputError(f"{what} {index} is all zeros and cannot be L2-normalized")
    return norms


def normalize(M: Any, mode: str) -> np.ndarray:
    """
    Normalize an embedding matrix.

    Args:
        M: (m, n) embedding matrix
        mode: One of NORMALIZATION_MODES

    Returns:
        Normalized (m, n) matrix
    """
    _check_mode(mode)
    M = as_embedding_matrix(M, "embeddings")

    if mode == "none":
        return M.copy()

    if mode == "row_l2":
        return M / _l2_norms(M, axis=1, what="row")

    if mode == "coord_l2":
        return M / _l2_norms(M, axis=0, what="column")

    col_min = M.min(axis=0, keepdims=True)
    col_range = M.max(axis=0, keepdims=True) - col_min
    constant = col_range == 0.0
    safe_range = np.where(constant, 1.0, col_range)
    scaled = (M - col_min) / safe_range
    return np.where(constant, CONSTANT_COLUMN_VALUE, scaled)


def normalize_backward(M: Any, mode: str, upstream_grad: Any) -> np.ndarray:
    """
    Chain rule through ``normalize``.

    Args:
        M: (m, n) input that was normalized
        mode: Normalization mode used in the forward pass
        upstream_grad: dL/d normalize(M), shape (m, n)

    Returns:
        dL/dM, shape (m, n)
    """
    _check_mode(mode)
    M = as_embedding_matrix(M, "embeddings")
    G = np.asarray(upstream_grad, dtype=np.float64)
    if G.shape != M.shape:
        raise ShapeError(f"upstream gradient shape {G.shape} does not match input shape {M.shape}")

    if mode == "none":
        return G.copy()

    if mode in ("row_l2", "coord_l2"):
        axis = 1 if mode == "row_l2" else 0
        norms = _l2_norms(M, axis=axis, what="row" if axis == 1 else "column")
        Y = M / norms
        # Projection onto the tangent space of the unit sphere, scaled by 1/norm.
        radial = np.sum(Y * G, axis=axis, keepdims=True)
        return (G - Y * radial) / norms

    # coord_minmax: the argmin/argmax of each column are held fixed.
    n = M.shape[1]
    col_min = M.min(axis=0)
    col_range = M.max(axis=0) - col_min
    arg_min = np.argmin(M, axis=0)
    arg_max = np.argmax(M, axis=0)
    constant = col_range == 0.0
    safe_range = np.where(constant, 1.0, col_range)
    Y = (M - col_min) / safe_range

    grad = G / safe_range
    columns = np.arange(n)
    grad_at_min = np.sum(G * (Y - 1.0), axis=0) / safe_range
    grad_at_max = -np.sum(G * Y, axis=0) / safe_range
    np.add.at(grad, (arg_min, columns), grad_at_min)
    np.add.at(grad, (arg_max, columns), grad_at_max)
    grad[:, constant] = 0.0
    return grad
