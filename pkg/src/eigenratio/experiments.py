"""Simulation harness: empirical size and power, null-law diagnostics, timing.

Each replicate is a pure function of (master seed, scenario, n, K, replicate
index).  A replicate samples one graph, computes its spectrum once, runs
parallel analysis once and records the statistic for every admissible k0;
all decisions are then taken in the parent from shared calibration tables.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import _rng
from .blockmodels import ScenarioKind, make_spec, sample_graph
from .inference import (
    CalibrationStore,
    TestConfig,
    _run_jobs,
    calibrate,
    eigengap_ratio,
    graph_spectrum,
    parallel_analysis,
    select_kmax,
)
from .spectra import EigensolverError

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentPlan",
    "ReplicateRecord",
    "RejectionTable",
    "KSReport",
    "TimingReport",
    "ExperimentFailure",
    "simulate_replicate",
    "run_replicates",
    "run_size_power",
    "run_null_distribution_check",
    "run_timing",
    "ks_critical_value",
    "write_manifest",
    "full_plan",
]

TSV_COLUMNS = ("scenario", "n", "k_true", "k0", "reps", "reject_rate")
MAX_FAILURE_RATE = 0.01


class ExperimentFailure(RuntimeError):
    """Too many replicates failed for the run to be trusted."""


@dataclass(frozen=True)
class ExperimentPlan:
    """A grid of (K, k0) cells for one scenario and network size.

    Only cells with ``k0 <= k_true`` are evaluated.
    """

    scenario: ScenarioKind
    n: int
    k_true: tuple = (3, 5, 10)
    k0: tuple = (1, 2, 3)
    reps: int = 200
    alpha: float = 0.05
    seed: int = 0
    epsilon: float = 0.4
    config: TestConfig = field(default_factory=TestConfig)

    def __post_init__(self):
        if not isinstance(self.scenario, ScenarioKind):
            object.__setattr__(self, "scenario", ScenarioKind(*self.scenario))
        object.__setattr__(self, "k_true", tuple(int(k) for k in np.atleast_1d(self.k_true)))
        object.__setattr__(self, "k0", tuple(int(k) for k in np.atleast_1d(self.k0)))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if min(self.k_true) < 1 or min(self.k0) < 1:
            raise ValueError("community counts must be positive")
        if self.config.alpha != self.alpha or self.config.seed != self.seed:
            object.__setattr__(
                self, "config", dataclasses.replace(self.config, alpha=self.alpha, seed=self.seed)
            )

    def cells(self):
        return [(k, k0) for k in self.k_true for k0 in self.k0 if k0 <= k]

    def to_dict(self):
        return {
            "scenario": str(self.scenario),
            "n": self.n,
            "k_true": list(self.k_true),
            "k0": list(self.k0),
            "reps": self.reps,
            "alpha": self.alpha,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "config": dataclasses.asdict(self.config),
        }


def full_plan(scenario, seed=0):
    """Full-scale grid: n=3000, K in {3, 5, 10, 15, 20}, 500 replicates."""
    return ExperimentPlan(
        scenario, 3000, k_true=(3, 5, 10, 15, 20), k0=(1, 2, 3, 5, 10, 15, 20), reps=500, seed=seed
    )


@dataclass(frozen=True)
class ReplicateRecord:
    """Everything a replicate contributes; decisions are derived from it."""

    scenario: str
    n: int
    k_true: int
    rep: int
    seed: int
    k_pa: int | None = None
    kmax: int | None = None
    kmax_capped: bool = False
    eigenvalues: tuple = ()
    statistics: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def failed(self):
        return self.error is not None

    def statistic(self, k0):
        return self.statistics.get(k0)


def replicate_seed(seed, scenario, n, k, rep):
    return _rng.derive_seed(seed, _rng.STAGE_EXPERIMENT, str(scenario), n, k, rep)


def simulate_replicate(scenario, n, k, rep, cfg, kmax=None):
    """Sample one graph and collect its statistics for every k0 < kmax - 1.

    ``kmax=None`` applies the configured policy (parallel analysis by default).
    """
    scenario = scenario if isinstance(scenario, ScenarioKind) else ScenarioKind(*scenario)
    seed = replicate_seed(cfg.seed, scenario, n, k, rep)
    base = dict(scenario=str(scenario), n=n, k_true=k, rep=rep, seed=seed)
    try:
        spec = make_spec(scenario, n, k, seed=seed)
        g = sample_graph(spec, _rng.derive_seed(seed, _rng.STAGE_GRAPH))
        k_pa, capped = None, False
        if kmax is None and cfg.kmax is None:
            cap = cfg.cap_for(n)
            spectrum = graph_spectrum(g, cap, cfg.tol)
            k_pa = parallel_analysis(g, cfg, seed, spectrum=spectrum)
            kmax = select_kmax(k_pa, cfg, n)
            capped = kmax < select_kmax(k_pa, cfg)
        else:
            kmax = cfg.kmax if kmax is None else kmax
            spectrum = None
        if spectrum is None or len(spectrum) < kmax + 2:
            spectrum = graph_spectrum(g, kmax + 2, cfg.tol)
        lam = spectrum.values[: kmax + 2]
        st = {k0: eigengap_ratio(lam, k0, kmax, on_degenerate="inf") for k0 in range(1, kmax - 1)}
        return ReplicateRecord(
            **base, k_pa=k_pa, kmax=kmax, kmax_capped=capped,
            eigenvalues=tuple(float(x) for x in lam), statistics=st,
        )
    except (EigensolverError, ArithmeticError, ValueError) as exc:
        log.warning("replicate %d failed: %s", rep, exc)
        return ReplicateRecord(**base, error=f"{type(exc).__name__}: {exc}")


def run_replicates(scenario, n, k, reps, cfg, kmax=None, n_jobs=None):
    """Records for replicates 0..reps-1, in replicate order."""
    n_jobs = cfg.n_jobs if n_jobs is None else n_jobs
    inner = dataclasses.replace(cfg, n_jobs=1)

    def one(rep):
        return simulate_replicate(scenario, n, k, rep, inner, kmax)

    recs = _run_jobs(one, list(range(reps)), n_jobs)
    bad = sum(r.failed for r in recs)
    if bad:
        log.warning("%d of %d replicates failed and were excluded", bad, reps)
    if bad > MAX_FAILURE_RATE * reps:
        raise ExperimentFailure(f"{bad} of {reps} replicates failed")
    return recs


def critical_values(store, n, kmaxes, cfg):
    """{d: c_alpha} covering every d a set of replicates needs."""
    top = max(kmaxes, default=3)
    tables = store.get_many(n, range(2, top), cfg)
    return {d: t.critical_value(cfg.alpha) for d, t in tables.items()}


def decide(record, crit):
    """Per-k0 rejection decisions of one replicate under critical values ``crit``."""
    return {k0: t > crit[record.kmax - k0] for k0, t in record.statistics.items()}


def sequential_estimate(record, crit):
    """First accepted k0 on the replicate's path, or None (saturated)."""
    for k0 in sorted(record.statistics):
        if not record.statistics[k0] > crit[record.kmax - k0]:
            return k0
    return None


def threshold_estimate(record, epsilon):
    t_n = float(record.n) ** epsilon
    return sequential_estimate(record, {d: t_n for d in range(2, record.kmax)})


@dataclass(frozen=True)
class RejectionTable:
    """Rejection frequencies keyed by (k_true, k0)."""

    scenario: str
    n: int
    cells: dict
    reps: dict
    failed: int = 0
    alpha: float = 0.05

    def rate(self, k_true, k0):
        return self.cells[(k_true, k0)]

    def rows(self):
        for (k, k0) in sorted(self.cells):
            yield (self.scenario, self.n, k, k0, self.reps[(k, k0)], self.cells[(k, k0)])

    def to_tsv(self, header=True):
        lines = ["\t".join(TSV_COLUMNS)] if header else []
        for row in self.rows():
            *head, rate = row
            lines.append("\t".join(str(x) for x in head) + f"\t{rate!r}")
        return "\n".join(lines) + "\n"

    def write_tsv(self, path):
        Path(path).write_text(self.to_tsv(), encoding="utf-8")


def rejection_table(plan, records_by_k, store):
    cfg = plan.config
    cells, reps, failed = {}, {}, 0
    for k, recs in records_by_k.items():
        ok = [r for r in recs if not r.failed]
        failed += len(recs) - len(ok)
        crit = critical_values(store, plan.n, [r.kmax for r in ok], cfg)
        for k0 in plan.k0:
            if k0 > k:
                continue
            hits = []
            for r in ok:
                if k0 not in r.statistics:
                    # kmax too small to test this k0 on this graph; not a rejection
                    hits.append(False)
                    continue
                hits.append(decide(r, crit)[k0])
            reps[(k, k0)] = len(hits)
            cells[(k, k0)] = float(np.mean(hits)) if hits else float("nan")
    return RejectionTable(str(plan.scenario), plan.n, cells, reps, failed, plan.alpha)


def run_size_power(plan, store=None, n_jobs=None, return_records=False):
    """Empirical size (diagonal) and power (below diagonal) for a plan."""
    store = store if store is not None else CalibrationStore()
    records = {
        k: run_replicates(plan.scenario, plan.n, k, plan.reps, plan.config, n_jobs=n_jobs)
        for k in plan.k_true
    }
    table = rejection_table(plan, records, store)
    return (table, records) if return_records else table


def ks_critical_value(n, m, level):
    """Asymptotic two-sample KS critical value at significance ``level``."""
    return float(stats.kstwobign.isf(level) * math.sqrt((n + m) / (n * m)))


@dataclass(frozen=True)
class KSReport:
    statistic: float
    pvalue: float
    reps: int
    j_reps: int
    critical_01: float
    critical_05: float
    null_samples: np.ndarray = field(repr=False, default=None)
    goe_samples: np.ndarray = field(repr=False, default=None)

    @property
    def below_01(self):
        return self.statistic < self.critical_01

    @property
    def below_05(self):
        return self.statistic < self.critical_05


def run_null_distribution_check(scenario, n, k, d, reps, cfg=None, *, k0=None, j_reps=1000, seed=0, n_jobs=1):
    """Two-sample KS comparison between T over graphs and T_W over GOE draws.

    ``k0`` defaults to ``k`` (the null configuration) and kmax is fixed at
    ``k0 + d``.  Graph and GOE streams both derive from ``seed``.
    """
    k0 = k if k0 is None else k0
    cfg = cfg or TestConfig()
    cfg = dataclasses.replace(cfg, seed=seed, j_reps=j_reps, kmax=None, n_jobs=1)
    kmax = k0 + d
    recs = run_replicates(scenario, n, k, reps, cfg, kmax=kmax, n_jobs=n_jobs)
    t = np.array([r.statistics[k0] for r in recs if not r.failed])
    goe = calibrate(n, d, dataclasses.replace(cfg, n_jobs=n_jobs), seed=_rng.derive_seed(seed, _rng.STAGE_GOE))
    res = stats.ks_2samp(t, goe.samples)
    return KSReport(
        float(res.statistic), float(res.pvalue), len(t), goe.J,
        ks_critical_value(len(t), goe.J, 0.01), ks_critical_value(len(t), goe.J, 0.05),
        t, goe.samples,
    )


@dataclass(frozen=True)
class TimingReport:
    """Per-size median wall-clock milliseconds per stage."""

    rows: tuple

    def to_tsv(self):
        cols = ("n", "sample_ms", "eigensolve_ms", "pa_ms", "calibration_ms", "test_ms", "total_ms")
        lines = ["\t".join(cols)]
        for r in self.rows:
            lines.append("\t".join(str(r[c]) if c == "n" else f"{r[c]:.1f}" for c in cols))
        return "\n".join(lines) + "\n"


def run_timing(ns=(1000, 2000, 3000), k=3, repeats=5, cfg=None, scenario=("sbm", "dense"), store=None):
    """Median per-stage timings of a single test at each n.

    Calibration is timed once per n (cold) and reported amortized over
    ``repeats``; the test stage uses the cached table.
    """
    cfg = cfg or TestConfig()
    store = store if store is not None else CalibrationStore()
    scenario = ScenarioKind(*scenario) if not isinstance(scenario, ScenarioKind) else scenario
    rows = []
    for n in ns:
        per = {"sample_ms": [], "eigensolve_ms": [], "pa_ms": [], "test_ms": []}
        calib_ms = None
        for rep in range(repeats):
            seed = replicate_seed(cfg.seed, scenario, n, k, rep)
            t0 = time.perf_counter()
            g = sample_graph(make_spec(scenario, n, k, seed=seed), seed)
            t1 = time.perf_counter()
            spectrum = graph_spectrum(g, cfg.cap_for(n), cfg.tol)
            t2 = time.perf_counter()
            k_pa = parallel_analysis(g, cfg, seed, spectrum=spectrum)
            kmax = select_kmax(k_pa, cfg, n)
            t3 = time.perf_counter()
            if calib_ms is None:
                store.get(n, kmax - k, cfg)
                calib_ms = (time.perf_counter() - t3) * 1e3
            t4 = time.perf_counter()
            crit = store.get(n, kmax - k, cfg).critical_value(cfg.alpha)
            _ = eigengap_ratio(spectrum.values, k, kmax) > crit
            t5 = time.perf_counter()
            per["sample_ms"].append((t1 - t0) * 1e3)
            per["eigensolve_ms"].append((t2 - t1) * 1e3)
            per["pa_ms"].append((t3 - t2) * 1e3)
            per["test_ms"].append((t5 - t4) * 1e3)
        row = {"n": n, **{key: float(np.median(v)) for key, v in per.items()}}
        row["calibration_ms"] = calib_ms / repeats
        row["total_ms"] = row["eigensolve_ms"] + row["pa_ms"] + row["calibration_ms"] + row["test_ms"]
        rows.append(row)
    return TimingReport(tuple(rows))


def _versions():
    import joblib
    import scipy
    import sklearn

    from . import __version__

    return {
        "eigenratio": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "joblib": joblib.__version__,
    }


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for key, val in obj.items():
            _flatten(f"{prefix}.{key}" if prefix else str(key), val, out)
    elif isinstance(obj, (list, tuple)):
        out[prefix] = ",".join(str(v) for v in obj)
    else:
        out[prefix] = "" if obj is None else str(obj)
    return out


def write_manifest(path, command, params, outputs=(), seed=None):
    """Flat ``key = value`` manifest: command, parameters, seed, versions, outputs."""
    flat = {"command": command}
    if seed is not None:
        flat["seed"] = str(seed)
    _flatten("param", params, flat)
    _flatten("version", _versions(), flat)
    for i, out in enumerate(outputs):
        flat[f"output.{i}"] = str(out)
    text = "".join(f"{k} = {v}\n" for k, v in flat.items())
    Path(path).write_text(text, encoding="utf-8")
    return Path(path)


def read_manifest(path):
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def records_to_json(records):
    def conv(r):
        d = dataclasses.asdict(r)
        d["statistics"] = {str(k): v for k, v in r.statistics.items()}
        return d

    return json.dumps([conv(r) for r in records], indent=1)
