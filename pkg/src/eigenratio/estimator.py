"""Estimator-style wrappers around the test and the community count estimators."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .inference import (
    CalibrationStore,
    TestConfig,
    estimate_k,
    estimate_k_threshold,
    parallel_analysis,
    select_kmax,
    test_k0,
)
from .validation import check_adjacency, check_positive_int

__all__ = ["ParallelAnalysis", "EigengapRatioTest", "CommunityCountEstimator"]


class _ConfigMixin:
    def _config(self, **extra):
        seed = 0 if self.random_state is None else int(self.random_state)
        params = dict(
            alpha=self.alpha,
            j_reps=check_positive_int(self.n_calibration, "n_calibration", 100),
            kmax=self.kmax,
            pa_reps=check_positive_int(self.pa_reps, "pa_reps"),
            pa_quantile=self.pa_quantile,
            seed=seed,
            n_jobs=self.n_jobs,
        )
        params.update(extra)
        return TestConfig(**params)

    def _store(self):
        store = getattr(self, "store_", None)
        if store is None or getattr(store, "directory", None) != self.cache_dir:
            store = CalibrationStore(self.cache_dir)
        return store


class ParallelAnalysis(BaseEstimator):
    """Permutation-based choice of the number of informative eigenvalues.

    Parameters
    ----------
    n_reps : int, default=50
        Number of column-permuted reference matrices B.
    quantile : float, default=0.95
        Reference quantile each observed eigenvalue must exceed.
    cap : int or None, default=None
        Number of leading eigenvalues examined; ``None`` uses floor(sqrt(n)).
    offset : int, default=5
        ``kmax_ = k_pa_ + offset``.
    symmetrize : {"mirror", "average"}, default="mirror"
        How a permuted matrix is made symmetric.
    random_state : int, default=0
    n_jobs : int, default=1

    Attributes
    ----------
    k_pa_ : int
    kmax_ : int
    eigenvalues_ : ndarray of shape (cap,)
        Leading eigenvalues of the adjacency matrix.
    quantiles_ : ndarray of shape (cap,)
        Per-index reference quantiles.
    n_nodes_ : int
    """

    def __init__(self, n_reps=50, quantile=0.95, cap=None, offset=5, symmetrize="mirror",
                 random_state=0, n_jobs=1):
        self.n_reps = n_reps
        self.quantile = quantile
        self.cap = cap
        self.offset = offset
        self.symmetrize = symmetrize
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        g = check_adjacency(X)
        cfg = TestConfig(
            pa_reps=check_positive_int(self.n_reps, "n_reps"),
            pa_quantile=self.quantile,
            pa_cap=self.cap,
            pa_offset=self.offset,
            pa_symmetrize=self.symmetrize,
            seed=0 if self.random_state is None else int(self.random_state),
            n_jobs=self.n_jobs,
        )
        res = parallel_analysis(g, cfg, return_details=True)
        self.k_pa_ = res.k_pa
        self.kmax_ = select_kmax(res.k_pa, cfg, g.n)
        self.eigenvalues_ = res.observed
        self.quantiles_ = res.quantiles
        self.n_reps_ = res.reps
        self.n_nodes_ = g.n
        return self

    def transform(self, X=None):
        """Boolean exceedance mask ``eigenvalues_ > quantiles_``."""
        check_is_fitted(self, "k_pa_")
        return self.eigenvalues_ > self.quantiles_


class EigengapRatioTest(_ConfigMixin, BaseEstimator):
    """Test H0: K = k0 against k0 < K <= kmax.

    Parameters
    ----------
    k0 : int, default=1
    alpha : float, default=0.05
    kmax : int or None, default=None
        Fixed upper bound; ``None`` selects it by parallel analysis plus 5.
    n_calibration : int, default=1000
        GOE replicates J used for the critical value.
    pa_reps : int, default=50
    pa_quantile : float, default=0.95
    cache_dir : path or None, default=None
        Where calibration tables are persisted; in memory when ``None``.
    random_state : int, default=0
    n_jobs : int, default=1

    Attributes
    ----------
    statistic_ : float
    critical_value_ : float
    reject_ : bool
    kmax_ : int
    outcome_ : TestOutcome
    """

    def __init__(self, k0=1, alpha=0.05, kmax=None, n_calibration=1000, pa_reps=50,
                 pa_quantile=0.95, cache_dir=None, random_state=0, n_jobs=1):
        self.k0 = k0
        self.alpha = alpha
        self.kmax = kmax
        self.n_calibration = n_calibration
        self.pa_reps = pa_reps
        self.pa_quantile = pa_quantile
        self.cache_dir = cache_dir
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        g = check_adjacency(X)
        k0 = check_positive_int(self.k0, "k0")
        self.store_ = self._store()
        out = test_k0(g, k0, self._config(), store=self.store_)
        self.outcome_ = out
        self.statistic_ = out.statistic
        self.critical_value_ = out.critical
        self.reject_ = out.reject
        self.kmax_ = out.kmax
        self.n_nodes_ = g.n
        return self

    def predict(self, X=None):
        """1 if H0 is rejected, else 0."""
        check_is_fitted(self, "outcome_")
        return np.array([int(self.reject_)])


class CommunityCountEstimator(_ConfigMixin, BaseEstimator):
    """Sequential estimate of the number of communities.

    Parameters
    ----------
    method : {"quantile", "threshold"}, default="quantile"
        ``quantile`` compares T with the GOE-calibrated critical value at
        level ``alpha``; ``threshold`` compares it with ``n ** epsilon``.
    alpha : float, default=0.05
    epsilon : float, default=0.4
        Threshold exponent, in (0, 5/6).
    kmax : int or None, default=None
    n_calibration : int, default=1000
    pa_reps : int, default=50
    pa_quantile : float, default=0.95
    cache_dir : path or None, default=None
    random_state : int, default=0
    n_jobs : int, default=1

    Attributes
    ----------
    n_communities_ : int or None
        Estimated K; ``None`` when every tested k0 was rejected.
    saturated_ : bool
    path_ : tuple of TestOutcome
    kmax_ : int
    k_pa_ : int or None
    result_ : EstimateResult
    """

    def __init__(self, method="quantile", alpha=0.05, epsilon=0.4, kmax=None, n_calibration=1000,
                 pa_reps=50, pa_quantile=0.95, cache_dir=None, random_state=0, n_jobs=1):
        self.method = method
        self.alpha = alpha
        self.epsilon = epsilon
        self.kmax = kmax
        self.n_calibration = n_calibration
        self.pa_reps = pa_reps
        self.pa_quantile = pa_quantile
        self.cache_dir = cache_dir
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        g = check_adjacency(X)
        cfg = self._config()
        if self.method == "quantile":
            self.store_ = self._store()
            res = estimate_k(g, cfg, self.store_)
        elif self.method == "threshold":
            res = estimate_k_threshold(g, self.epsilon, cfg)
        else:
            raise ValueError(f"method must be 'quantile' or 'threshold', got {self.method!r}")
        self.result_ = res
        self.n_communities_ = res.k_hat
        self.saturated_ = res.saturated
        self.path_ = res.path
        self.kmax_ = res.kmax
        self.k_pa_ = res.k_pa
        self.n_nodes_ = g.n
        return self

    def predict(self, X=None):
        check_is_fitted(self, "result_")
        return self.n_communities_

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()
