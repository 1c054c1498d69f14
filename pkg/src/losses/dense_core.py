"""
Dense linear algebra substrate for the losses.

Embedding matrices are 2-D float64 arrays in row-major (C) order: row i is the
embedding of the i-th pair element, so gradients with respect to a matrix are
matrices of the same layout and chain through plain matrix products.
"""

from typing import Any

import numpy as np
from scipy.special import logsumexp, softmax

from ..common.error_handler import DegenerateInputError, DomainError, ShapeError

FLOAT = np.float64


def as_embedding_matrix(data: Any, name: str = "matrix") -> np.ndarray:
    """
    Validate and convert input to an EmbeddingMatrix.

    Args:
        data: Array-like of shape (m, n)
        name: Name used in error messages

    Returns:
        C-contiguous float64 array with m >= 1, n >= 1 and finite entries
    """
    matrix = np.ascontiguousarray(data, dtype=FLOAT)
    if matrix.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {matrix.shape}")
    if matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and one column, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise DegenerateInputError(f"{name} contains non-finite entries")
    return matrix


def matmul_transposed(Q: Any, A: Any) -> np.ndarray:
    """
    Compute the similarity matrix S[i][j] = dot(q_i, a_j).

    Each entry is reduced over the same elementwise products in the same
    order whichever argument comes first, so
    ``matmul_transposed(A, Q) == matmul_transposed(Q, A).T`` holds bit for bit.

    Args:
        Q: (m, n) query embeddings
        A: (m, n) answer embeddings

    Returns:
        (m, m) similarity matrix
    """
    Q = as_embedding_matrix(Q, "Q")
    A = as_embedding_matrix(A, "A")
    if Q.shape != A.shape:
        raise ShapeError(f"Q and A must have the same shape, got {Q.shape} and {A.shape}")
    return np.sum(Q[:, None, :] * A[None, :, :], axis=2)


def row_softmax(S: Any) -> np.ndarray:
    """Softmax applied by rows, with max subtraction."""
    S = np.asarray(S, dtype=FLOAT)
    if S.ndim != 2:
        raise ShapeError(f"similarity matrix must be 2-D, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise DegenerateInputError("similarity matrix contains non-finite entries")
    return softmax(S, axis=1)


def log_sum_exp(row: Any) -> float:
    """
    log(sum(exp(x))) computed with max subtraction.

    Raises:
        DomainError: on an empty vector
    """
    x = np.asarray(row, dtype=FLOAT).ravel()
    if x.size == 0:
        raise DomainError("log_sum_exp of an empty vector is undefined")
    return float(logsumexp(x))


def row_log_sum_exp(S: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp of a 2-D array."""
    return logsumexp(np.asarray(S, dtype=FLOAT), axis=1)
