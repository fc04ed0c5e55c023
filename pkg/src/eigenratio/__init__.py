"""Spectral estimation of the number of communities in a network.

The eigengap-ratio statistic compares the gap after a hypothesized number of
leading eigenvalues with the gap at the edge of the noise bulk, calibrated
against GOE matrices.
"""

__version__ = "0.1.0"

from .blockmodels import (
    BlockModelSpec,
    ScenarioKind,
    build_probability_matrix,
    make_spec,
    sample_graph,
)
from .estimator import CommunityCountEstimator, EigengapRatioTest, ParallelAnalysis
from .graph import (
    Graph,
    from_adjacency,
    from_edges,
    largest_connected_component,
    parse_edge_list,
    read_edge_list,
    symmetrize_directed,
)
from .inference import (
    CalibrationStore,
    CalibrationTable,
    EstimateResult,
    TestConfig,
    TestOutcome,
    calibrate,
    calibration_statistic,
    eigengap_ratio,
    estimate_k,
    estimate_k_threshold,
    parallel_analysis,
    select_kmax,
    test_k0,
)
from .spectra import Spectrum, dense_eigenvalues, permute_columns, sample_goe, top_eigenvalues

__all__ = [
    "BlockModelSpec",
    "ScenarioKind",
    "build_probability_matrix",
    "make_spec",
    "sample_graph",
    "CommunityCountEstimator",
    "EigengapRatioTest",
    "ParallelAnalysis",
    "Graph",
    "from_adjacency",
    "from_edges",
    "largest_connected_component",
    "parse_edge_list",
    "read_edge_list",
    "symmetrize_directed",
    "CalibrationStore",
    "CalibrationTable",
    "EstimateResult",
    "TestConfig",
    "TestOutcome",
    "calibrate",
    "calibration_statistic",
    "eigengap_ratio",
    "estimate_k",
    "estimate_k_threshold",
    "parallel_analysis",
    "select_kmax",
    "test_k0",
    "Spectrum",
    "dense_eigenvalues",
    "permute_columns",
    "sample_goe",
    "top_eigenvalues",
]
