import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from eigenratio.blockmodels import make_spec, sample_graph
from eigenratio.graph import from_edges
from eigenratio.spectra import (
    EigensolverError,
    Spectrum,
    dense_eigenvalues,
    permute_columns,
    permuted_reference,
    sample_goe,
    sample_goe_tridiagonal_top,
    top_eigenvalues,
)


def test_spectrum_validation_and_accessor():
    s = Spectrum(np.array([3.0, 2.0, 2.0]), 3, np.zeros(3), True)
    assert s.eig(1) == 3.0 and len(s) == 3
    with pytest.raises(IndexError):
        s.eig(4)
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0, 2.0]), 2, np.zeros(2), True)


def test_dense_oracle_on_known_matrix():
    # path graph P4: 2 cos(k pi / 5)
    A = from_edges(4, [(0, 1), (1, 2), (2, 3)]).to_dense()
    expected = np.sort(2 * np.cos(np.arange(1, 5) * np.pi / 5))[::-1]
    np.testing.assert_allclose(dense_eigenvalues(A), expected, atol=1e-14)


@pytest.mark.parametrize("n", [60, 300, 700])
def test_lanczos_matches_dense_on_sbm(n):
    g = sample_graph(make_spec(("sbm", "dense"), n, 3, seed=n), n)
    got = top_eigenvalues(g.to_csr(), 12, dense_threshold=0)
    assert got.converged
    np.testing.assert_allclose(got.values, dense_eigenvalues(g.to_dense())[:12], atol=1e-8)


def test_lanczos_on_repeated_eigenvalues():
    # disjoint union of identical cliques: top eigenvalue repeated
    k, s = 4, 10
    edges = [(b * s + i, b * s + j) for b in range(k) for i in range(s) for j in range(i + 1, s)]
    A = from_edges(k * s, edges).to_csr()
    got = top_eigenvalues(A, 6, dense_threshold=0)
    np.testing.assert_allclose(got.values, [9, 9, 9, 9, -1, -1], atol=1e-8)


def test_lanczos_on_zero_matrix():
    got = top_eigenvalues(sp.csr_matrix((50, 50)), 5, dense_threshold=0)
    np.testing.assert_array_equal(got.values, np.zeros(5))


def test_lanczos_failure_reports_partial_results():
    g = sample_graph(make_spec(("sbm", "dense"), 600, 3, seed=1), 1)
    with pytest.raises(EigensolverError) as exc:
        top_eigenvalues(g.to_csr(), 20, tol=1e-15, dense_threshold=0, max_restarts=1, ncv=25)
    assert exc.value.spectrum is not None


@given(st.integers(2, 40), st.integers(0, 2**32))
def test_lanczos_matches_dense_on_random_symmetric(n, seed):
    W = sample_goe(n, seed)
    m = min(n, 5)
    got = top_eigenvalues(W, m, dense_threshold=0)
    np.testing.assert_allclose(got.values, dense_eigenvalues(W)[:m], atol=1e-9)


def test_goe_entry_variances():
    rng = np.random.default_rng(0)
    W = np.stack([sample_goe(40, rng) for _ in range(300)])
    off = W[:, np.triu_indices(40, 1)[0], np.triu_indices(40, 1)[1]]
    diag = W[:, np.arange(40), np.arange(40)]
    assert off.var() * 40 == pytest.approx(1.0, rel=0.02)
    assert diag.var() * 40 == pytest.approx(2.0, rel=0.05)
    assert np.array_equal(W[0], W[0].T)


def test_tridiagonal_and_dense_goe_agree_in_law():
    n, reps = 200, 400
    rng_a, rng_b = np.random.default_rng(1), np.random.default_rng(2)
    tri = np.array([sample_goe_tridiagonal_top(n, 3, rng_a) for _ in range(reps)])
    dense = np.array([dense_eigenvalues(sample_goe(n, rng_b))[:3] for _ in range(reps)])
    for j in range(3):
        assert stats.ks_2samp(tri[:, j], dense[:, j]).pvalue > 0.001
    # top eigenvalue concentrates near the edge at 2
    assert tri[:, 0].mean() == pytest.approx(2.0, abs=0.1)


def test_permute_columns_preserves_column_sums_and_symmetry():
    g = sample_graph(make_spec(("sbm", "dense"), 120, 2, seed=0), 0)
    S, M = permute_columns(g, 3, return_raw=True)
    np.testing.assert_array_equal(M.sum(axis=0), g.degrees)
    assert set(np.unique(M)) <= {0.0, 1.0}
    assert np.array_equal(S, S.T)
    assert set(np.unique(S)) <= {0.0, 1.0}
    assert np.all(np.diag(S) == 0)
    avg = permute_columns(g, 3, symmetrize="average")
    assert set(np.unique(avg)) <= {0.0, 0.5, 1.0}
    assert np.array_equal(avg, (M + M.T) / 2)


def test_permutation_places_ones_uniformly():
    # a column with d ones out of n lands on each row with probability d / n
    g = from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 2)])
    counts = np.zeros((5, 5))
    reps = 4000
    rng = np.random.default_rng(0)
    for _ in range(reps):
        counts += permute_columns(g, rng, return_raw=True)[1]
    freq = counts / reps
    expected = np.tile(g.degrees / 5, (5, 1))
    assert np.abs(freq - expected).max() < 0.035


def test_permuted_reference_matches_dense_route():
    g = sample_graph(make_spec(("sbm", "dense"), 300, 3, seed=4), 4)
    a = permuted_reference(g, 10, np.random.default_rng(7), dense_threshold=0)
    S = permute_columns(g, np.random.default_rng(7))
    np.testing.assert_allclose(a, dense_eigenvalues(S)[:10], atol=1e-8)
