"""Input validation for adjacency inputs."""

import numpy as np
import scipy.sparse as sp
from sklearn.utils import check_array

from .graph import Graph

__all__ = ["check_adjacency", "check_positive_int"]


def check_adjacency(X, allow_self_loops=False):
    """Validate an adjacency input and return it as a :class:`Graph`.

    Parameters
    ----------
    X : Graph, array-like or sparse matrix of shape (n, n)
        Symmetric 0/1 matrix with zero diagonal.
    allow_self_loops : bool, default=False
        Silently drop a nonzero diagonal instead of raising.

    Returns
    -------
    graph : Graph
    """
    if isinstance(X, Graph):
        return X
    A = check_array(X, accept_sparse="csr", dtype=None, ensure_min_samples=1, ensure_min_features=1)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {A.shape}")
    A = sp.csr_matrix(A)
    A.eliminate_zeros()
    if A.nnz and not np.all(A.data == 1):
        raise ValueError("adjacency entries must be 0 or 1")
    if A.diagonal().any():
        if not allow_self_loops:
            raise ValueError("adjacency has self-loops (nonzero diagonal)")
        A.setdiag(0)
        A.eliminate_zeros()
    if (A != A.T).nnz:
        raise ValueError("adjacency matrix is not symmetric")
    A.sort_indices()
    return Graph(A.shape[0], A.indptr, A.indices)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
