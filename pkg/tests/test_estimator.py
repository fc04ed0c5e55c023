import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from eigenratio.blockmodels import make_spec, sample_graph
from eigenratio.estimator import CommunityCountEstimator, EigengapRatioTest, ParallelAnalysis
from eigenratio.validation import check_adjacency, check_positive_int


@pytest.fixture(scope="module")
def graph():
    return sample_graph(make_spec(("sbm", "dense"), 300, 3, seed=6), 6)


def test_check_adjacency_accepts_dense_sparse_and_graph(graph):
    dense = graph.to_dense()
    assert check_adjacency(dense) == graph
    assert check_adjacency(sp.csr_matrix(dense)) == graph
    assert check_adjacency(graph) is graph


@pytest.mark.parametrize(
    "bad",
    [
        np.array([[0, 1], [0, 0]]),
        np.array([[0, 2], [2, 0]]),
        np.array([[1, 1], [1, 0]]),
        np.ones((2, 3)),
        np.array([[0, np.nan], [np.nan, 0]]),
    ],
)
def test_check_adjacency_rejects(bad):
    with pytest.raises(ValueError):
        check_adjacency(bad)


def test_self_loops_can_be_dropped():
    g = check_adjacency(np.array([[1, 1], [1, 0]]), allow_self_loops=True)
    assert g.edge_count == 1


def test_check_positive_int():
    assert check_positive_int(np.int64(3), "x") == 3
    with pytest.raises(TypeError):
        check_positive_int(2.5, "x")
    with pytest.raises(ValueError):
        check_positive_int(0, "x")


def test_params_roundtrip():
    est = CommunityCountEstimator(method="threshold", epsilon=0.3, kmax=7)
    params = est.get_params()
    assert params["epsilon"] == 0.3 and params["kmax"] == 7
    c = clone(est).set_params(alpha=0.1)
    assert c.alpha == 0.1 and c.method == "threshold"


def test_parallel_analysis_estimator(graph):
    pa = ParallelAnalysis(n_reps=20).fit(graph.to_dense())
    assert pa.k_pa_ == 3 and pa.kmax_ == 8
    assert pa.transform().shape == (17,)
    assert pa.quantiles_.shape == pa.eigenvalues_.shape


def test_test_estimator(graph):
    t = EigengapRatioTest(k0=2, kmax=7, n_calibration=200).fit(graph)
    assert t.reject_ and t.statistic_ > t.critical_value_
    assert t.predict().tolist() == [1]
    t3 = EigengapRatioTest(k0=3, kmax=8, n_calibration=200).fit(graph)
    assert t3.kmax_ == 8 and t3.outcome_.d == 5


def test_count_estimator_methods_agree_on_clear_signal(graph):
    q = CommunityCountEstimator(pa_reps=20, n_calibration=200).fit(graph)
    t = CommunityCountEstimator(method="threshold", kmax=8).fit(graph)
    assert q.n_communities_ == t.n_communities_ == 3
    assert q.fit_predict(graph) == 3
    assert not q.saturated_ and len(q.path_) == 3


def test_not_fitted_and_bad_method(graph):
    with pytest.raises(NotFittedError):
        CommunityCountEstimator().predict()
    with pytest.raises(ValueError):
        CommunityCountEstimator(method="bogus", kmax=6).fit(graph)
