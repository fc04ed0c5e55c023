import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from eigenratio.experiments import (
    TSV_COLUMNS,
    ExperimentPlan,
    full_plan,
    ks_critical_value,
    read_manifest,
    run_null_distribution_check,
    run_replicates,
    run_size_power,
    run_timing,
    write_manifest,
)
from eigenratio.inference import CalibrationStore, TestConfig, calibrate


@pytest.fixture(scope="module")
def store():
    return CalibrationStore()


def small_plan(**kw):
    base = dict(scenario=("sbm", "dense"), n=300, k_true=(2, 4), k0=(1, 2, 3), reps=4, seed=1,
                config=TestConfig(j_reps=200, pa_reps=20))
    base.update(kw)
    return ExperimentPlan(**base)


def test_plan_cells_are_upper_triangular():
    plan = small_plan()
    assert plan.cells() == [(2, 1), (2, 2), (4, 1), (4, 2), (4, 3)]
    with pytest.raises(ValueError):
        small_plan(reps=0)
    full = full_plan(("sbm", "dense"))
    assert full.n == 3000 and full.reps == 500 and 20 in full.k_true


def test_size_power_table_shape_and_determinism(store):
    plan = small_plan()
    a = run_size_power(plan, store)
    b = run_size_power(plan, CalibrationStore(), n_jobs=2)
    assert set(a.cells) == set(plan.cells())
    assert a.cells == b.cells and a.to_tsv() == b.to_tsv()
    lines = a.to_tsv().splitlines()
    assert lines[0].split("\t") == list(TSV_COLUMNS)
    assert len(lines) == 1 + len(plan.cells())
    assert all(len(line.split("\t")) == 6 for line in lines)
    # clear signal: the below-diagonal cells are powers near one
    assert a.rate(4, 1) == 1.0 and a.rate(4, 3) == 1.0
    for (k, k0), rate in a.cells.items():
        assert rate * a.reps[(k, k0)] == pytest.approx(round(rate * a.reps[(k, k0)]))


def test_single_replicate_plan_is_bernoulli(store):
    t = run_size_power(small_plan(reps=1, k_true=(3,), k0=(3,)), store)
    assert t.rate(3, 3) in (0.0, 1.0)


def test_replicates_record_every_admissible_k0():
    recs = run_replicates(("sbm", "dense"), 200, 3, 2, TestConfig(pa_reps=10))
    for r in recs:
        assert not r.failed and r.kmax == r.k_pa + 5
        assert sorted(r.statistics) == list(range(1, r.kmax - 1))
        assert len(r.eigenvalues) == r.kmax + 2


@pytest.fixture(scope="module")
def dense_plan_table(store):
    plan = ExperimentPlan(("sbm", "dense"), 1000, k_true=(3, 5, 10), k0=(3,), reps=20, seed=3)
    return run_size_power(plan, store)


def test_high_k_power_is_one(dense_plan_table):
    assert dense_plan_table.rate(10, 3) == 1.0


def test_power_monotone_in_separation(dense_plan_table):
    rates = [dense_plan_table.rate(k, 3) for k in (3, 5, 10)]
    inversions = [a - b for a, b in zip(rates, rates[1:]) if a > b]
    assert len(inversions) <= 1 and all(x <= 0.05 for x in inversions)


def test_ks_critical_value_matches_scipy_exact_at_large_samples():
    # asymptotic value vs scipy's own p-value threshold
    crit = ks_critical_value(300, 1000, 0.01)
    assert crit == pytest.approx(1.6276 * math.sqrt(1300 / 300000), rel=1e-3)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=300), rng.normal(size=1000)
    d = stats.ks_2samp(x, y).statistic
    assert (d < crit) == (stats.ks_2samp(x, y, method="asymp").pvalue > 0.01)


def test_goe_against_goe_passes_ks():
    # 100 repeats rather than 20: same 90% bar, far less Monte-Carlo slack
    below, repeats = 0, 100
    for rep in range(repeats):
        a = calibrate(200, 5, TestConfig(j_reps=500, seed=2 * rep)).samples
        b = calibrate(200, 5, TestConfig(j_reps=500, seed=2 * rep + 1)).samples
        below += stats.ks_2samp(a, b).statistic < ks_critical_value(500, 500, 0.05)
    assert below >= 0.9 * repeats


def test_null_check_separates_under_alternative():
    rep = run_null_distribution_check(("sbm", "dense"), 500, 5, 5, 50, k0=3, j_reps=500, seed=1)
    assert rep.reps == 50 and rep.j_reps == 500
    assert not rep.below_01


def test_timing_report():
    cfg = TestConfig(pa_reps=5, j_reps=100)
    rep = run_timing(ns=(1000, 2000, 3000), repeats=5, cfg=cfg)
    rows = rep.rows
    totals = [r["total_ms"] for r in rows]
    assert totals == sorted(totals)
    for r in rows:
        parts = r["eigensolve_ms"] + r["pa_ms"] + r["calibration_ms"] + r["test_ms"]
        assert r["total_ms"] == pytest.approx(parts)
    assert rep.to_tsv().splitlines()[0].startswith("n\t")


def test_manifest_roundtrip(tmp_path):
    p = write_manifest(tmp_path / "m.txt", "simulate", {"n": 10, "k": [1, 2]}, ["out.tsv"], seed=5)
    m = read_manifest(p)
    assert m["command"] == "simulate" and m["seed"] == "5"
    assert m["param.k"] == "1,2" and m["output.0"] == "out.tsv"
    assert "version.numpy" in m


def test_plan_syncs_config():
    plan = small_plan(alpha=0.1, seed=9)
    assert plan.config.alpha == 0.1 and plan.config.seed == 9
    assert dataclasses.asdict(plan.config)["j_reps"] == 200
