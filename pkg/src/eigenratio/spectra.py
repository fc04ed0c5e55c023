"""Top-of-spectrum eigenvalues for symmetric matrices.

The iterative path is a thick-restart Lanczos method with full
reorthogonalization, run on the Gershgorin-shifted operator ``A + s I`` so
that the wanted (algebraically largest) eigenvalues are also the dominant
ones.  A dense LAPACK path serves as the small-matrix fallback and as the
verification oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ._rng import as_generator

__all__ = [
    "EigensolverError",
    "Spectrum",
    "top_eigenvalues",
    "dense_eigenvalues",
    "sample_goe",
    "sample_goe_tridiagonal_top",
    "permute_columns",
    "permuted_reference",
    "DENSE_THRESHOLD",
    "DENSE_MAX",
]

DENSE_THRESHOLD = 512
DENSE_MAX = 5000
# permute_columns materializes n x n float64 matrices
PERMUTE_MAX = 20000


class EigensolverError(RuntimeError):
    """Raised when the Krylov iteration does not reach the tolerance.

    The partial Ritz values and their residual norms are kept on the
    exception so callers can inspect how close the run got.
    """

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


@dataclass(frozen=True)
class Spectrum:
    """The ``m`` algebraically largest eigenvalues, in decreasing order."""

    values: np.ndarray
    m: int
    residuals: np.ndarray
    converged: bool
    iterations: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) != self.m:
            raise ValueError("values must be a vector of length m")
        if np.any(np.diff(values) > 0):
            raise ValueError("eigenvalues must be non-increasing")

    def __len__(self):
        return self.m

    def __getitem__(self, index):
        return self.values[index]

    def eig(self, s):
        """1-based accessor, ``eig(1)`` is the largest eigenvalue."""
        if not 1 <= s <= self.m:
            raise IndexError(f"eigenvalue index {s} outside 1..{self.m}")
        return float(self.values[s - 1])


def _gershgorin_shift(matrix):
    if sp.issparse(matrix):
        return float(np.max(np.asarray(abs(matrix).sum(axis=1)).ravel(), initial=0.0))
    return float(np.max(np.abs(matrix).sum(axis=1), initial=0.0))


def _as_operator(matrix):
    if sp.issparse(matrix):
        m = sp.csr_matrix(matrix, dtype=float)
        return m.shape[0], m.dot, m
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    return arr.shape[0], arr.dot, arr


def dense_eigenvalues(matrix):
    """All eigenvalues of a dense symmetric matrix, in decreasing order."""
    arr = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    n = arr.shape[0]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if n > DENSE_MAX:
        raise ValueError(f"dense eigendecomposition limited to n <= {DENSE_MAX}, got n={n}")
    return scipy.linalg.eigvalsh(arr, check_finite=True)[::-1].copy()


def _dense_top(arr, m):
    n = arr.shape[0]
    vals = scipy.linalg.eigvalsh(arr, subset_by_index=[n - m, n - 1])[::-1].copy()
    return Spectrum(vals, m, np.zeros(m), True, 0)


def top_eigenvalues(
    matrix,
    m,
    tol=1e-10,
    *,
    dense_threshold=DENSE_THRESHOLD,
    ncv=None,
    max_restarts=50,
    seed=0,
):
    """Return the ``m`` algebraically largest eigenvalues of a symmetric matrix.

    Parameters
    ----------
    matrix : ndarray or scipy.sparse matrix
        Symmetric ``n x n`` matrix.  Symmetry is assumed, not checked.
    m : int
        Number of eigenvalues, ``1 <= m <= n``.
    tol : float
        Residual tolerance relative to the norm of the shifted operator.
    dense_threshold : int
        Matrices with ``n <= dense_threshold`` go to LAPACK directly.
        Pass 0 to force the Krylov path.
    ncv : int, optional
        Krylov subspace dimension; defaults to ``max(2m + 10, 40)``.
    max_restarts : int
        Number of thick restarts before giving up.
    seed : int
        Seed for the starting vector, so results are reproducible.

    Returns
    -------
    Spectrum

    Raises
    ------
    EigensolverError
        If the top ``m`` Ritz pairs are not converged after ``max_restarts``.
    """
    n, matvec, mat = _as_operator(matrix)
    m = int(m)
    if not 1 <= m <= n:
        raise ValueError(f"m must lie in 1..{n}, got {m}")
    if n <= dense_threshold:
        arr = mat.toarray() if sp.issparse(mat) else mat
        return _dense_top(arr, m)

    shift = _gershgorin_shift(mat)
    rng = as_generator(seed)
    if ncv is None:
        ncv = max(2 * m + 10, 40)
    ncv = int(min(ncv, n))
    keep_target = min(ncv - 1, m + max((ncv - m) // 2, 1))

    V = np.empty((n, ncv + 1))
    H = np.zeros((ncv, ncv))
    v = rng.standard_normal(n)
    V[:, 0] = v / np.linalg.norm(v)
    start = 0
    beta = 0.0
    anorm = max(2.0 * shift, 1.0)

    for restart in range(max_restarts + 1):
        for j in range(start, ncv):
            w = matvec(V[:, j]) + shift * V[:, j]
            basis = V[:, : j + 1]
            h = basis.T @ w
            w -= basis @ h
            # second pass (DGKS); one Gram-Schmidt sweep is not enough near convergence
            h2 = basis.T @ w
            w -= basis @ h2
            h += h2
            H[: j + 1, j] = h
            H[j, : j + 1] = h
            beta = float(np.linalg.norm(w))
            if beta <= 1e-12 * anorm:
                # invariant subspace: continue from a fresh direction with zero coupling
                beta = 0.0
                if j + 1 < n:
                    w = rng.standard_normal(n)
                    for _ in range(2):
                        w -= basis @ (basis.T @ w)
                    V[:, j + 1] = w / np.linalg.norm(w)
                else:
                    V[:, j + 1] = 0.0
            else:
                V[:, j + 1] = w / beta

        theta, Y = np.linalg.eigh(H)
        order = np.argsort(theta)[::-1]
        theta = theta[order]
        Y = Y[:, order]
        anorm = max(anorm, float(np.max(np.abs(theta))))
        resid = np.abs(beta * Y[-1, :])
        if ncv == n or np.all(resid[:m] <= tol * anorm):
            return Spectrum(theta[:m] - shift, m, resid[:m], True, restart)

        keep = keep_target
        Yk = Y[:, :keep]
        V[:, :keep] = V[:, :ncv] @ Yk
        V[:, keep] = V[:, ncv]
        H[:] = 0.0
        H[np.arange(keep), np.arange(keep)] = theta[:keep]
        coupling = beta * Yk[-1, :]
        H[keep, :keep] = coupling
        H[:keep, keep] = coupling
        start = keep

    partial = Spectrum(theta[:m] - shift, m, resid[:m], False, max_restarts)
    raise EigensolverError(
        f"Krylov iteration did not converge in {max_restarts} restarts "
        f"(max residual {resid[:m].max():.3e}, tolerance {tol * anorm:.3e})",
        partial,
    )


def sample_goe(n, rng=None):
    """Draw a GOE matrix: off-diagonal N(0, 1/n), diagonal N(0, 2/n)."""
    if n < 2:
        raise ValueError("GOE dimension must be at least 2")
    rng = as_generator(rng)
    G = rng.standard_normal((n, n))
    # (G + G^T) / sqrt(2n): off-diagonal variance 1/n, diagonal 2/n
    W = G + G.T
    W *= 1.0 / np.sqrt(2.0 * n)
    return W


def sample_goe_tridiagonal_top(n, m, rng=None):
    """Top ``m`` eigenvalues of an n x n GOE draw via the tridiagonal model.

    Uses the Dumitriu-Edelman beta=1 tridiagonal ensemble, which has exactly
    the GOE eigenvalue law, so the cost is O(n) instead of O(n^2) storage.
    """
    if n < 2:
        raise ValueError("GOE dimension must be at least 2")
    rng = as_generator(rng)
    diag = rng.standard_normal(n) * np.sqrt(2.0)
    dof = np.arange(n - 1, 0, -1, dtype=float)
    off = np.sqrt(rng.chisquare(dof))
    scale = 1.0 / np.sqrt(n)
    vals = scipy.linalg.eigvalsh_tridiagonal(
        diag * scale, off * scale, select="i", select_range=(n - m, n - 1)
    )
    return vals[::-1].copy()


def _degrees_of(g):
    if hasattr(g, "degrees") and hasattr(g, "n"):
        return g.n, np.asarray(g.degrees, dtype=np.int64)
    m = sp.csr_matrix(g)
    return m.shape[0], np.asarray((m != 0).sum(axis=0)).ravel().astype(np.int64)


def _random_column_subsets(deg, n, rng):
    """Row indices of a column-permuted 0/1 matrix with column sums ``deg``.

    A uniform permutation of a 0/1 column puts its ones on a uniform random
    subset of rows of the same size, so the subsets are drawn directly:
    candidates are drawn with replacement and rejected while already taken.
    Returns sorted linear keys ``col * n + row``.
    """
    deg = np.asarray(deg, dtype=np.int64)
    cols = np.repeat(np.arange(n, dtype=np.int64), deg)
    keys = np.unique(cols * n + rng.integers(0, n, size=len(cols)))
    while True:
        have = np.bincount(keys // n, minlength=n)
        need = deg - have
        if not need.any():
            return keys
        cand_cols = np.repeat(np.arange(n, dtype=np.int64), need)
        cand = np.unique(cand_cols * n + rng.integers(0, n, size=len(cand_cols)))
        pos = np.searchsorted(keys, cand)
        taken = (pos < len(keys)) & (keys[np.minimum(pos, len(keys) - 1)] == cand)
        cand = cand[~taken]
        # dedup above may overshoot a column's quota only if duplicates were dropped,
        # which never adds, so counts stay <= deg
        keys = np.insert(keys, np.searchsorted(keys, cand), cand)


def _permuted_sparse(g, rng, symmetrize):
    n, deg = _degrees_of(g)
    if np.any(deg > n):
        raise ValueError("column sum exceeds n")
    keys = _random_column_subsets(deg, n, rng)
    cols, rows = np.divmod(keys, n)
    raw = sp.csr_matrix((np.ones(len(keys)), (rows, cols)), shape=(n, n))
    if symmetrize == "mirror":
        up = rows < cols
        U = sp.csr_matrix((np.ones(int(up.sum())), (rows[up], cols[up])), shape=(n, n))
        S = (U + U.T).tocsr()
    elif symmetrize == "average":
        S = ((raw + raw.T) * 0.5).tocsr()
    else:
        raise ValueError(f"unknown symmetrize mode {symmetrize!r}")
    S.sort_indices()
    return S, raw


def permute_columns(g, rng=None, symmetrize="mirror", return_raw=False):
    """Column-permuted copy of the adjacency matrix, made symmetric (dense).

    Each column is shuffled with its own uniform permutation.  The result is
    not symmetric, so it is symmetrized before eigenvalues are taken:

    ``"mirror"``
        keep the strict upper triangle and reflect it (entries stay 0/1 and
        the entry variance is unchanged).
    ``"average"``
        ``(M + M.T) / 2``; entries lie in {0, 1/2, 1} but the noise variance
        is halved, which shrinks the reference bulk edge by sqrt(2).

    With ``return_raw=True`` the unsymmetrized matrix ``M`` is returned too.
    """
    n = g.n if hasattr(g, "n") else np.shape(g)[0]
    if n > PERMUTE_MAX:
        raise ValueError(
            f"n={n} too large for a dense permuted matrix; use permuted_reference instead"
        )
    S, raw = _permuted_sparse(g, as_generator(rng), symmetrize)
    if return_raw:
        return S.toarray(), raw.toarray()
    return S.toarray()


def permuted_reference(g, m, rng=None, symmetrize="mirror", tol=1e-10, dense_threshold=DENSE_THRESHOLD):
    """Top ``m`` eigenvalues of one column-permuted, symmetrized matrix (sparse path)."""
    S, _ = _permuted_sparse(g, as_generator(rng), symmetrize)
    return top_eigenvalues(S, m, tol=tol, dense_threshold=dense_threshold).values
