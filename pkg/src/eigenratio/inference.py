"""Eigengap-ratio test for the number of communities.

For a hypothesized rank ``k0`` and an upper bound ``kmax`` the statistic is

    T = (l[k0+1] - l[kmax+1]) / (l[kmax+1] - l[kmax+2])

on the decreasing eigenvalues ``l`` of the adjacency matrix.  Its null law is
mimicked by the same ratio on a GOE matrix with ``d = kmax - k0``,

    T_W = (w[1] - w[d+1]) / (w[d+1] - w[d+2]),

and the critical value is an upper quantile of Monte-Carlo draws of T_W.
``kmax`` comes from parallel analysis (permutation reference spectra) plus a
fixed offset.  Scanning k0 = 1, 2, ... until the first acceptance gives the
sequential estimate of K.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import _rng
from .graph import Graph, from_adjacency
from .spectra import (
    Spectrum,
    permuted_reference,
    sample_goe,
    sample_goe_tridiagonal_top,
    top_eigenvalues,
)

log = logging.getLogger(__name__)

__all__ = [
    "TestConfig",
    "CalibrationTable",
    "CalibrationStore",
    "TestOutcome",
    "EstimateResult",
    "PAResult",
    "DegenerateGapError",
    "MissingCalibrationError",
    "eigengap_ratio",
    "calibration_statistic",
    "order_statistic_quantile",
    "calibrate",
    "calibrate_many",
    "parallel_analysis",
    "select_kmax",
    "kmax_cap",
    "test_k0",
    "estimate_k",
    "estimate_k_threshold",
    "graph_spectrum",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
SAMPLERS = ("tridiagonal", "dense")
# calibration spectra are computed to a depth that is a multiple of this, so a
# table for (n, d) does not depend on which other d were calibrated alongside it
_DEPTH_STEP = 16


class DegenerateGapError(ArithmeticError):
    """The denominator eigengap is exactly zero."""


class MissingCalibrationError(LookupError):
    """No calibration table for the requested (n, d); run calibrate first."""


def _frac(x):
    return Fraction(x).limit_denominator(10**9)


def _bump_to_integral(count, level):
    """Smallest count' >= count such that level * count' is an integer."""
    den = _frac(level).denominator
    return int(math.ceil(count / den) * den)


@dataclass(frozen=True)
class TestConfig:
    """Parameters of the test, calibration and parallel analysis.

    ``kmax`` set to an integer selects the fixed policy; left as ``None``
    the bound is ``K_PA + pa_offset``.  ``j_reps`` is bumped upward so that
    ``(1 - alpha) * j_reps`` is an integer.  ``pa_reps`` is used as given;
    the reference quantile is the ``ceil(pa_quantile * pa_reps)``-th order
    statistic.
    """

    __test__ = False  # not a pytest class

    alpha: float = 0.05
    j_reps: int = 1000
    kmax: int | None = None
    pa_offset: int = 5
    pa_reps: int = 50
    pa_quantile: float = 0.95
    pa_cap: int | None = None
    seed: int = 0
    sampler: str = "tridiagonal"
    pa_symmetrize: str = "mirror"
    nearest_n: bool = False
    tol: float = 1e-10
    n_jobs: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.pa_quantile < 1:
            raise ValueError(f"pa_quantile must lie in (0, 1), got {self.pa_quantile}")
        if self.j_reps < 1 or self.pa_reps < 1:
            raise ValueError("j_reps and pa_reps must be positive")
        if self.kmax is not None and self.kmax < 3:
            raise ValueError("a fixed kmax must be at least 3")
        if self.pa_offset < 0:
            raise ValueError("pa_offset must be nonnegative")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        object.__setattr__(self, "j_reps", _bump_to_integral(self.j_reps, 1 - _frac(self.alpha)))

    @property
    def kmax_policy(self):
        if self.kmax is not None:
            return ("fixed", self.kmax)
        return ("pa_plus", self.pa_offset)

    def cap_for(self, n):
        cap = math.isqrt(n) if self.pa_cap is None else int(self.pa_cap)
        return max(1, min(cap, n))


def _values(spec):
    if isinstance(spec, Spectrum):
        return spec.values
    return np.asarray(spec, dtype=float)


def eigengap_ratio(spec, k0, kmax, on_degenerate="raise"):
    """T = (l[k0+1] - l[kmax+1]) / (l[kmax+1] - l[kmax+2]), 1-based indices.

    With ``on_degenerate="inf"`` an exactly zero denominator yields ``inf``
    instead of raising :class:`DegenerateGapError`.
    """
    lam = _values(spec)
    if not 0 <= k0 < kmax:
        raise ValueError(f"need 0 <= k0 < kmax, got k0={k0}, kmax={kmax}")
    if len(lam) < kmax + 2:
        raise ValueError(f"need {kmax + 2} eigenvalues, got {len(lam)}")
    num = lam[k0] - lam[kmax]
    den = lam[kmax] - lam[kmax + 1]
    if den == 0:
        if on_degenerate == "inf":
            return math.inf
        raise DegenerateGapError(f"l[{kmax + 1}] == l[{kmax + 2}]")
    return float(num / den)


def calibration_statistic(spec, d):
    """T_W = (w[1] - w[d+1]) / (w[d+1] - w[d+2]) for a GOE spectrum."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return eigengap_ratio(spec, 0, d)


def order_statistic_quantile(sorted_samples, level):
    """The ceil(level * N)-th smallest sample (1-based); level 1 gives the max."""
    x = np.asarray(sorted_samples)
    N = len(x)
    if N == 0:
        raise ValueError("no samples")
    r = math.ceil(_frac(level) * N)
    return float(x[min(max(r, 1), N) - 1])


@dataclass(frozen=True, eq=False)
class CalibrationTable:
    """Sorted Monte-Carlo draws of T_W for one (n, d)."""

    n: int
    d: int
    samples: np.ndarray
    seed: int = 0
    sampler: str = "tridiagonal"
    depth: int = 0

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float))
        if self.d < 2:
            raise ValueError("calibration tables need d >= 2")
        if not np.all(np.isfinite(s)):
            raise ValueError("calibration samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def J(self):
        return len(self.samples)

    @property
    def key(self):
        return (self.n, self.d)

    def critical_value(self, alpha):
        """(1 - alpha) quantile as the ceil((1 - alpha) J)-th order statistic."""
        if not 0 <= alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        return order_statistic_quantile(self.samples, 1 - _frac(alpha))

    def filename(self):
        return f"calib_n{self.n}_d{self.d}_J{self.J}_s{self.seed}_{self.sampler}.txt"

    def dumps(self):
        head = [
            "# eigenratio calibration table",
            f"format_version = {FORMAT_VERSION}",
            f"n = {self.n}",
            f"d = {self.d}",
            f"J = {self.J}",
            f"seed = {self.seed}",
            f"sampler = {self.sampler}",
            f"depth = {self.depth}",
            "---",
        ]
        return "\n".join(head + [repr(float(x)) for x in self.samples]) + "\n"

    def save(self, path):
        """Write to ``path``; existing files are never overwritten."""
        path = Path(path)
        if path.exists():
            return path
        tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}")
        tmp.write_text(self.dumps(), encoding="utf-8")
        os.replace(tmp, path)
        return path

    @classmethod
    def loads(cls, text):
        header, _, body = text.partition("\n---\n")
        meta = {}
        for line in header.splitlines():
            if line.startswith("#") or "=" not in line:
                continue
            k, v = (s.strip() for s in line.split("=", 1))
            meta[k] = v
        if int(meta.get("format_version", -1)) != FORMAT_VERSION:
            raise ValueError("unsupported calibration table format")
        samples = np.array([float(x) for x in body.split()])
        if len(samples) != int(meta["J"]):
            raise ValueError("calibration table is truncated")
        return cls(
            n=int(meta["n"]),
            d=int(meta["d"]),
            samples=samples,
            seed=int(meta["seed"]),
            sampler=meta.get("sampler", "tridiagonal"),
            depth=int(meta.get("depth", 0)),
        )

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _depth_for(d):
    return _DEPTH_STEP * math.ceil((d + 2) / _DEPTH_STEP)


def _goe_top(n, depth, gen, sampler, tol):
    if sampler == "tridiagonal":
        return sample_goe_tridiagonal_top(n, depth, gen)
    W = sample_goe(n, gen)
    return top_eigenvalues(W, depth, tol=tol).values


def _goe_replicate(n, depth, ds, seed, j, sampler, tol):
    for attempt in range(2):
        key = (_rng.STAGE_GOE, n, j) if attempt == 0 else (_rng.STAGE_GOE, n, j, 1)
        w = _goe_top(n, depth, _rng.substream(seed, *key), sampler, tol)
        gaps = w[1 : depth - 1] - w[2:depth]
        if np.all(gaps > 0):
            return [calibration_statistic(w, d) for d in ds]
    raise DegenerateGapError(f"GOE replicate {j} has a zero eigengap twice in a row")


def _run_jobs(fn, items, n_jobs):
    if n_jobs == 1 or len(items) < 2:
        return [fn(x) for x in items]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(x) for x in items)


def calibrate_many(n, ds, cfg=None, seed=None):
    """Calibration tables for several d at one n, sharing the GOE draws.

    Replicate j of dimension n always uses the same substream, so every table
    equals the one :func:`calibrate` builds for that (n, d) alone.
    """
    cfg = cfg or TestConfig()
    seed = cfg.seed if seed is None else int(seed)
    ds = sorted({int(d) for d in ds})
    if not ds:
        return {}
    if ds[0] < 2:
        raise ValueError("calibration needs d >= 2")
    if cfg.j_reps < 100:
        raise ValueError("calibration needs at least 100 GOE replicates")
    if n < max(ds) + 2:
        raise ValueError(f"n={n} too small for d={max(ds)}")
    tables = {}
    by_depth = {}
    for d in ds:
        by_depth.setdefault(min(_depth_for(d), n), []).append(d)
    for depth, group in by_depth.items():
        # degeneracy is checked over the whole depth class, keep ds fixed per class
        every = list(range(2, depth - 1))

        def one(j, depth=depth, every=every):
            return _goe_replicate(n, depth, every, seed, j, cfg.sampler, cfg.tol)

        rows = np.array(_run_jobs(one, list(range(cfg.j_reps)), cfg.n_jobs))
        for d in group:
            col = every.index(d)
            tables[d] = CalibrationTable(n, d, rows[:, col], seed, cfg.sampler, depth)
    return tables


def calibrate(n, d, cfg=None, seed=None):
    """Monte-Carlo calibration table of T_W for dimension n and d = kmax - k0."""
    return calibrate_many(n, [d], cfg, seed)[d]


class CalibrationStore:
    """Memory (and optionally disk) cache of calibration tables.

    With ``auto=True`` missing tables are created on demand.
    """

    def __init__(self, directory=None, auto=True):
        self.directory = Path(directory) if directory is not None else None
        self.auto = auto
        self._tables = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def _key(n, d, cfg):
        return (n, d, cfg.j_reps, cfg.seed, cfg.sampler)

    def add(self, table, cfg=None):
        J = table.J
        self._tables[(table.n, table.d, J, table.seed, table.sampler)] = table
        if self.directory is not None:
            table.save(self.directory / table.filename())

    def _lookup(self, n, d, cfg):
        key = self._key(n, d, cfg)
        if key in self._tables:
            return self._tables[key]
        if self.directory is not None:
            probe = CalibrationTable(n, d, np.zeros(1), cfg.seed, cfg.sampler)
            fname = probe.filename().replace("_J1_", f"_J{cfg.j_reps}_")
            path = self.directory / fname
            if path.exists():
                table = CalibrationTable.load(path)
                self._tables[key] = table
                return table
        return None

    def _nearest(self, n, d, cfg):
        cands = []
        if self.directory is not None:
            pattern = f"calib_n*_d{d}_J{cfg.j_reps}_s{cfg.seed}_{cfg.sampler}.txt"
            for p in self.directory.glob(pattern):
                m = int(p.name.split("_")[1][1:])
                cands.append((abs(m - n), m))
        for (m, dd, J, s, smp) in self._tables:
            if (dd, J, s, smp) == (d, cfg.j_reps, cfg.seed, cfg.sampler):
                cands.append((abs(m - n), m))
        cands = [c for c in cands if c[0] / n <= 0.1]
        if not cands:
            return None
        return self._lookup(min(cands)[1], d, cfg)

    def get_many(self, n, ds, cfg):
        out, missing = {}, []
        for d in ds:
            t = self._lookup(n, d, cfg)
            if t is None and cfg.nearest_n:
                t = self._nearest(n, d, cfg)
            if t is None:
                missing.append(d)
            else:
                out[d] = t
        if missing:
            if not self.auto:
                raise MissingCalibrationError(
                    f"no calibration table for n={n}, d={missing}; run calibrate first"
                )
            log.info("calibrating n=%d d=%s with J=%d", n, missing, cfg.j_reps)
            for d, t in calibrate_many(n, missing, cfg).items():
                self.add(t)
                out[d] = t
        return out

    def get(self, n, d, cfg):
        return self.get_many(n, [d], cfg)[d]


@dataclass(frozen=True)
class PAResult:
    k_pa: int
    observed: np.ndarray
    quantiles: np.ndarray
    cap: int
    reps: int
    level: float

    @property
    def exceed(self):
        return self.observed > self.quantiles

    def __int__(self):
        return self.k_pa


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    k0: int
    kmax: int
    statistic: float
    critical: float
    reject: bool
    eigenvalues_used: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reject != (self.statistic > self.critical):
            raise ValueError("reject must equal statistic > critical")

    @property
    def d(self):
        return self.kmax - self.k0


@dataclass(frozen=True)
class EstimateResult:
    """Outcome of the sequential scan.

    ``k_hat`` is ``None`` when every hypothesis up to ``kmax - 2`` was
    rejected; :attr:`saturated` flags it and :meth:`label` prints ``>=kmax``.
    """

    k_hat: int | None
    path: tuple
    method: str
    kmax: int
    k_pa: int | None = None
    kmax_capped: bool = False

    @property
    def saturated(self):
        return self.k_hat is None

    def label(self):
        return f">={self.kmax}" if self.k_hat is None else str(self.k_hat)


def _as_graph(g):
    if isinstance(g, Graph):
        return g
    return from_adjacency(g)


def graph_spectrum(g, m, tol=1e-10):
    """Top ``m`` eigenvalues of the adjacency matrix of ``g``."""
    g = _as_graph(g)
    return top_eigenvalues(g.to_csr(), min(m, g.n), tol=tol)


def _pa_replicate(g, cap, seed, b, symmetrize, tol):
    gen = _rng.substream(seed, _rng.STAGE_PERMUTE, b)
    return permuted_reference(g, cap, gen, symmetrize=symmetrize, tol=tol)


def parallel_analysis(g, cfg=None, seed=None, *, spectrum=None, return_details=False):
    """Number of leading eigenvalues above their permutation reference quantile.

    For b = 1..B each column of A is permuted independently, the result is
    symmetrized, and its top ``C`` eigenvalues are taken.  ``q_j`` is the
    empirical ``pa_quantile`` of the j-th eigenvalue across b, and
    ``K_PA = max{j <= C : l_j(A) > q_j}`` (0 if no such j).
    """
    cfg = cfg or TestConfig()
    g = _as_graph(g)
    seed = cfg.seed if seed is None else int(seed)
    cap = cfg.cap_for(g.n)
    if spectrum is None or len(spectrum) < cap:
        spectrum = graph_spectrum(g, cap, cfg.tol)
    observed = _values(spectrum)[:cap]

    def one(b):
        return _pa_replicate(g, cap, seed, b, cfg.pa_symmetrize, cfg.tol)

    ref = np.sort(np.array(_run_jobs(one, list(range(cfg.pa_reps)), cfg.n_jobs)), axis=0)
    q = np.array([order_statistic_quantile(ref[:, j], cfg.pa_quantile) for j in range(cap)])
    hits = np.flatnonzero(observed > q)
    k_pa = int(hits[-1] + 1) if len(hits) else 0
    res = PAResult(k_pa, observed, q, cap, cfg.pa_reps, cfg.pa_quantile)
    return res if return_details else k_pa


def kmax_cap(n):
    """Defensive upper bound on kmax: n // 10 (at least 3), and kmax + 2 <= n."""
    return min(max(3, n // 10), n - 2)


def select_kmax(k_pa, cfg=None, n=None):
    """kmax = K_PA + offset (default 5), or the configured fixed value.

    With ``n`` given the result is clipped to :func:`kmax_cap`.
    """
    if k_pa < 0:
        raise ValueError("k_pa must be nonnegative")
    cfg = cfg or TestConfig()
    kmax = cfg.kmax if cfg.kmax is not None else int(k_pa) + cfg.pa_offset
    if n is not None:
        kmax = min(kmax, kmax_cap(n))
    return kmax


def _resolve_kmax(g, cfg, seed, spectrum):
    """(kmax, k_pa, capped, spectrum) under the configured policy."""
    if cfg.kmax is not None:
        if cfg.kmax + 2 > g.n:
            raise ValueError(f"kmax={cfg.kmax} needs n >= {cfg.kmax + 2}")
        return cfg.kmax, None, False, spectrum
    cap = cfg.cap_for(g.n)
    if spectrum is None or len(spectrum) < cap:
        spectrum = graph_spectrum(g, cap, cfg.tol)
    k_pa = parallel_analysis(g, cfg, seed, spectrum=spectrum)
    wanted = select_kmax(k_pa, cfg)
    kmax = select_kmax(k_pa, cfg, g.n)
    if kmax < wanted:
        log.warning("kmax capped at %d (K_PA=%d, n=%d)", kmax, k_pa, g.n)
    return kmax, k_pa, kmax < wanted, spectrum


def _used(lam, k0, kmax):
    return {
        1: float(lam[0]),
        k0 + 1: float(lam[k0]),
        kmax + 1: float(lam[kmax]),
        kmax + 2: float(lam[kmax + 1]),
    }


def _outcome(lam, k0, kmax, critical):
    t = eigengap_ratio(lam, k0, kmax, on_degenerate="inf")
    return TestOutcome(k0, kmax, t, float(critical), bool(t > critical), _used(lam, k0, kmax))


def _table_for(g_n, d, cfg, table, store):
    if table is not None:
        if table.d != d:
            raise ValueError(f"table has d={table.d}, test needs d={d}")
        if table.n != g_n and not (cfg.nearest_n and abs(table.n - g_n) / g_n <= 0.1):
            raise ValueError(f"table calibrated at n={table.n}, graph has n={g_n}")
        return table
    if store is None:
        raise MissingCalibrationError(
            f"no calibration table for n={g_n}, d={d}; run calibrate first or pass a store"
        )
    return store.get(g_n, d, cfg)


def test_k0(g, k0, cfg=None, table=None, *, store=None, kmax=None, spectrum=None, seed=None):
    """Test H0: K = k0 against k0 < K <= kmax.

    ``kmax`` defaults to the configured policy (parallel analysis unless a
    fixed value is set).  A precomputed ``spectrum`` of A with at least
    ``kmax + 2`` values is reused.
    """
    cfg = cfg or TestConfig()
    g = _as_graph(g)
    if k0 < 1:
        raise ValueError("k0 must be >= 1")
    if kmax is None:
        kmax, _, _, spectrum = _resolve_kmax(g, cfg, seed, spectrum)
    if kmax - k0 < 2:
        raise ValueError(f"kmax - k0 must be >= 2, got kmax={kmax}, k0={k0}")
    if spectrum is None or len(spectrum) < kmax + 2:
        spectrum = graph_spectrum(g, kmax + 2, cfg.tol)
    tab = _table_for(g.n, kmax - k0, cfg, table, store)
    return _outcome(_values(spectrum), k0, kmax, tab.critical_value(cfg.alpha))


test_k0.__test__ = False


def _scan(g, cfg, seed, spectrum, critical_for, method):
    kmax, k_pa, capped, spectrum = _resolve_kmax(g, cfg, seed, spectrum)
    if spectrum is None or len(spectrum) < kmax + 2:
        spectrum = graph_spectrum(g, kmax + 2, cfg.tol)
    lam = _values(spectrum)
    crit = critical_for(kmax)
    path = []
    k_hat = None
    for k0 in range(1, kmax - 1):
        out = _outcome(lam, k0, kmax, crit[kmax - k0])
        path.append(out)
        if not out.reject:
            k_hat = k0
            break
    return EstimateResult(k_hat, tuple(path), method, kmax, k_pa, capped)


def estimate_k(g, cfg=None, store=None, *, seed=None, spectrum=None):
    """Sequential estimate: the first k0 = 1, 2, ... whose null is accepted."""
    cfg = cfg or TestConfig()
    g = _as_graph(g)
    store = store if store is not None else CalibrationStore()

    def critical_for(kmax):
        tables = store.get_many(g.n, range(2, kmax), cfg)
        return {d: t.critical_value(cfg.alpha) for d, t in tables.items()}

    return _scan(g, cfg, seed, spectrum, critical_for, f"quantile(alpha={cfg.alpha})")


def estimate_k_threshold(g, epsilon=0.4, cfg=None, *, seed=None, spectrum=None):
    """Threshold estimate: accept k0 when T <= n**epsilon; no calibration needed."""
    if not 0 < epsilon < 5 / 6:
        raise ValueError(f"epsilon must lie in (0, 5/6), got {epsilon}")
    cfg = cfg or TestConfig()
    g = _as_graph(g)
    t_n = float(g.n) ** epsilon

    def critical_for(kmax):
        return {d: t_n for d in range(2, kmax)}

    return _scan(g, cfg, seed, spectrum, critical_for, f"threshold(epsilon={epsilon})")


def with_seed(cfg, seed):
    return replace(cfg, seed=int(seed))
