"""Block-model probability matrices and Bernoulli graph sampling.

The general model is the degree-corrected mixed membership model,

    P_ij = w_i * w_j * pi_i^T Q pi_j,

with SBM (pure memberships, unit degrees), DCSBM (pure memberships) and MM
(unit degrees) as special cases.  Adjacency entries are independent
Bernoulli(P_ij) draws for i < j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _rng
from .graph import Graph, from_edges

__all__ = [
    "BlockModelSpec",
    "ScenarioKind",
    "ProbabilityError",
    "MODELS",
    "DENSITIES",
    "build_probability_matrix",
    "max_probability",
    "sample_graph",
    "sample_omega",
    "sample_omegas",
    "make_q",
    "make_sbm_spec",
    "make_dcsbm_spec",
    "make_dcmm_spec",
    "make_spec",
    "balanced_sizes",
    "DENSE_P_LIMIT",
]

MODELS = ("sbm", "dcsbm", "dcmm")
DENSITIES = ("dense", "sparse")
# above this n the probability matrix is never materialized
DENSE_P_LIMIT = 20000
_ROW_BLOCK = 256
_PROFILE_TOL = 1e-12


class ProbabilityError(ValueError):
    """An entry of P falls outside [0, 1]."""

    def __init__(self, i, j, value):
        super().__init__(f"P[{i}, {j}] = {value!r} lies outside [0, 1]")
        self.index = (i, j)
        self.value = value


@dataclass(frozen=True)
class ScenarioKind:
    """One of the six simulation designs: {sbm, dcsbm, dcmm} x {dense, sparse}.

    The Q shape follows from the model: planted partition for SBM/DCSBM,
    geometric off-diagonal decay for DCMM.
    """

    model: str
    density: str

    def __post_init__(self):
        object.__setattr__(self, "model", self.model.lower())
        object.__setattr__(self, "density", self.density.lower())
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.density not in DENSITIES:
            raise ValueError(f"density must be one of {DENSITIES}, got {self.density!r}")

    @property
    def qshape(self):
        return "geometric" if self.model == "dcmm" else "planted"

    def __str__(self):
        return f"{self.density}-{self.model}"


@dataclass(frozen=True, eq=False)
class BlockModelSpec:
    """Full generative description of a block model.

    ``profiles`` is the n x K membership matrix (rows on the simplex) and
    ``degrees`` the positive degree parameters.  ``metadata`` records how
    the spec was generated (community sizes, rescaling, seed).
    """

    n: int
    k: int
    q: np.ndarray
    profiles: np.ndarray
    degrees: np.ndarray
    model: str = "dcmm"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        q = np.array(self.q, dtype=float, ndmin=2)
        profiles = np.array(self.profiles, dtype=float, ndmin=2)
        degrees = np.array(self.degrees, dtype=float).ravel()
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "degrees", degrees)
        self.validate()

    def validate(self):
        n, k = self.n, self.k
        if k < 1 or n < 1:
            raise ValueError("n and k must be positive")
        if self.q.shape != (k, k):
            raise ValueError(f"q must be {k}x{k}, got {self.q.shape}")
        if not np.array_equal(self.q, self.q.T):
            raise ValueError("q must be symmetric")
        if self.q.min() < 0 or self.q.max() > 1:
            raise ValueError("q entries must lie in [0, 1]")
        if self.profiles.shape != (n, k):
            raise ValueError(f"profiles must be {n}x{k}, got {self.profiles.shape}")
        if self.profiles.min() < 0:
            raise ValueError("membership profiles must be nonnegative")
        bad = np.flatnonzero(np.abs(self.profiles.sum(axis=1) - 1.0) > _PROFILE_TOL)
        if len(bad):
            raise ValueError(f"profile of node {bad[0]} does not sum to 1")
        if self.degrees.shape != (n,) or np.any(self.degrees <= 0):
            raise ValueError("degrees must be n positive numbers")

    @property
    def weighted_profiles(self):
        return self.degrees[:, None] * self.profiles

    def memberships(self):
        """Index of the dominant community of each node (pure nodes only are exact)."""
        return np.argmax(self.profiles, axis=1)


def max_probability(spec):
    """Largest entry of P, computed over distinct profile types (no n x n work)."""
    types, inv = np.unique(spec.profiles, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    wmax = np.zeros(len(types))
    np.maximum.at(wmax, inv, spec.degrees)
    B = (types @ spec.q @ types.T) * np.outer(wmax, wmax)
    return float(B.max())


def build_probability_matrix(spec):
    """Dense symmetric P with P_ij = w_i w_j pi_i^T Q pi_j.

    Raises
    ------
    ProbabilityError
        Naming the first offending (i, j) when an entry leaves [0, 1].
    """
    if spec.n > DENSE_P_LIMIT:
        raise ValueError(f"n={spec.n} too large to materialize P; sample from the spec instead")
    X = spec.weighted_profiles
    P = X @ spec.q @ X.T
    # exact symmetry regardless of BLAS summation order
    P = np.triu(P) + np.triu(P, 1).T
    _check_range(P, 0)
    return P


def _check_range(block, row_offset):
    bad = (block < 0) | (block > 1)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ProbabilityError(int(i) + row_offset, int(j), float(block[i, j]))


def _seed_from(rng):
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63))
    return 0 if rng is None else int(rng)


def sample_graph(p, rng=None):
    """Sample an undirected graph with independent Bernoulli(P_ij) edges, i < j.

    ``p`` is either a dense probability matrix or a :class:`BlockModelSpec`
    (rows of P are then formed block by block and never held in full).
    Rows are processed in fixed blocks of 256, each with its own substream,
    so the output depends only on the seed.
    """
    seed = _seed_from(rng)
    if isinstance(p, BlockModelSpec):
        n = p.n
        X = p.weighted_profiles
        XQ = X @ p.q

        def rows(r0, r1):
            return XQ[r0:r1] @ X.T

    else:
        P = np.asarray(p, dtype=float)
        n = P.shape[0]
        if P.shape != (n, n):
            raise ValueError("probability matrix must be square")

        def rows(r0, r1):
            return P[r0:r1]

    src, dst = [], []
    for b, r0 in enumerate(range(0, n, _ROW_BLOCK)):
        r1 = min(r0 + _ROW_BLOCK, n)
        block = rows(r0, r1)
        _check_range(block, r0)
        gen = _rng.substream(seed, _rng.STAGE_GRAPH, b)
        u = gen.random(block.shape)
        hit = u < block
        # keep strict upper triangle only
        hit &= np.arange(n)[None, :] > np.arange(r0, r1)[:, None]
        i, j = np.nonzero(hit)
        src.append(i + r0)
        dst.append(j)
    edges = np.column_stack([np.concatenate(src), np.concatenate(dst)]) if n else np.empty((0, 2))
    return from_edges(n, edges)


def sample_omega(rng=None):
    """One degree parameter from the unit-mean mixture.

    Uniform[4/5, 6/5] with probability 0.8, and the atoms 9/11 and 13/11
    with probability 0.1 each.
    """
    return float(sample_omegas(1, rng)[0])


def sample_omegas(size, rng=None):
    rng = _rng.as_generator(rng)
    u = rng.random(size)
    eta = rng.uniform(0.8, 1.2, size)
    return np.where(u < 0.8, eta, np.where(u < 0.9, 9.0 / 11.0, 13.0 / 11.0))


def make_q(kind, n, k):
    """Community interaction matrix for a simulation scenario."""
    if not isinstance(kind, ScenarioKind):
        kind = ScenarioKind(*kind)
    idx = np.arange(1, k + 1)
    if kind.qshape == "planted":
        q = 0.1 * (1.0 + 4.0 * np.eye(k))
        scale = 1.0
    else:
        q = 0.1 ** np.abs(idx[:, None] - idx[None, :]).astype(float)
        q[np.diag_indices(k)] = (k + 1 - idx) / k
        scale = 0.5
    if kind.density == "sparse":
        q = q * (scale * n ** (-2.0 / 9.0))
    return q


def balanced_sizes(total, parts):
    """Floor split with the remainder handed out one by one in index order."""
    base, rem = divmod(int(total), int(parts))
    return np.array([base + (1 if i < rem else 0) for i in range(parts)], dtype=np.int64)


def _check_args(n, k):
    if k < 1:
        raise ValueError(f"number of communities must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"n={n} is smaller than K={k}")


def _assign(labels_or_profiles, rng):
    """Random node order: a uniform permutation of the assignment list."""
    if rng is None:
        return labels_or_profiles
    perm = rng.permutation(len(labels_or_profiles))
    return labels_or_profiles[perm]


def make_sbm_spec(n, k, q, rng=None, *, model="sbm", degrees=None):
    """SBM spec with balanced pure memberships and unit degrees.

    Without ``rng`` the communities occupy contiguous index ranges; with it,
    nodes are assigned to communities uniformly at random.
    """
    _check_args(n, k)
    gen = None if rng is None else _rng.as_generator(rng)
    sizes = balanced_sizes(n, k)
    labels = _assign(np.repeat(np.arange(k), sizes), gen)
    profiles = np.eye(k)[labels]
    deg = np.ones(n) if degrees is None else degrees
    meta = {"community_sizes": sizes.tolist()}
    return BlockModelSpec(n, k, q, profiles, deg, model=model, metadata=meta)


def make_dcsbm_spec(n, k, q, rng=None, *, normalize=False):
    """DCSBM: SBM memberships with degrees drawn from the unit-mean mixture."""
    _check_args(n, k)
    gen = _rng.as_generator(rng)
    omega = sample_omegas(n, gen)
    if normalize:
        omega = omega * (n / omega.sum())
    spec = make_sbm_spec(n, k, q, gen, model="dcsbm", degrees=omega)
    return _fit_to_unit(spec)


def _mm_profiles(k):
    if k == 1:
        return np.ones((1, 1))
    a = np.zeros((3, k))
    a[0, :2] = (0.2, 0.8)
    a[1, :2] = (0.8, 0.2)
    a[2, :] = 1.0 / k
    return a


def make_dcmm_spec(n, k, q, rng=None, *, normalize=False, unit_degrees=False):
    """DCMM spec: ``floor(n0)`` pure nodes per community, the rest mixed.

    ``n0 = (1/K - 0.03) n``.  The leftover nodes are split evenly across the
    three mixed profiles (0.2, 0.8, 0, ...), (0.8, 0.2, 0, ...) and
    (1/K, ..., 1/K).  With ``unit_degrees`` this is the MM model.
    """
    _check_args(n, k)
    frac = Fraction(1, k) - Fraction(3, 100)
    if frac <= 0:
        raise ValueError(f"(1/K - 0.03) must be positive; K={k} is too large")
    gen = _rng.as_generator(rng)
    n0 = int(frac * n)  # floor, exact arithmetic
    pure = np.repeat(np.arange(k), n0)
    profiles = [np.eye(k)[pure]]
    rest = n - n0 * k
    mm = _mm_profiles(k)
    mm_sizes = balanced_sizes(rest, len(mm))
    for vec, size in zip(mm, mm_sizes):
        profiles.append(np.tile(vec, (size, 1)))
    profiles = np.vstack(profiles)
    profiles = _assign(profiles, gen)
    omega = np.ones(n) if unit_degrees else sample_omegas(n, gen)
    if normalize:
        omega = omega * (n / omega.sum())
    meta = {
        "pure_per_community": n0,
        "mixed_sizes": mm_sizes.tolist(),
    }
    spec = BlockModelSpec(n, k, q, profiles, omega, model="dcmm", metadata=meta)
    return _fit_to_unit(spec)


def _fit_to_unit(spec):
    """Shrink Q uniformly when degree corrections push some P_ij above 1.

    A common factor keeps rank and community structure intact, unlike
    entrywise clipping.
    """
    top = max_probability(spec)
    if top <= 1.0:
        return spec
    meta = dict(spec.metadata, q_rescale=1.0 / top)
    return BlockModelSpec(spec.n, spec.k, spec.q / top, spec.profiles, spec.degrees, spec.model, meta)


def make_spec(kind, n, k, seed=0, q=None, *, normalize=False):
    """Spec for one of the six simulation scenarios.

    ``q`` overrides the scenario's default interaction matrix.
    """
    if not isinstance(kind, ScenarioKind):
        kind = ScenarioKind(*kind)
    if q is None:
        q = make_q(kind, n, k)
    gen = _rng.substream(seed, _rng.STAGE_SPEC)
    if kind.model == "sbm":
        spec = make_sbm_spec(n, k, q, gen)
    elif kind.model == "dcsbm":
        spec = make_dcsbm_spec(n, k, q, gen, normalize=normalize)
    else:
        spec = make_dcmm_spec(n, k, q, gen, normalize=normalize)
    spec.metadata.update(scenario=str(kind), seed=int(seed))
    return spec
