"""Undirected simple graphs, edge-list ingestion and preprocessing."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Graph",
    "GraphStats",
    "ParseReport",
    "EdgeListParseError",
    "from_edges",
    "from_adjacency",
    "parse_edge_list",
    "parse_directed_pairs",
    "read_edge_list",
    "symmetrize_directed",
    "largest_connected_component",
    "graph_stats",
    "format_edge_list",
    "write_edge_list",
]


class EdgeListParseError(ValueError):
    """Malformed edge-list input; ``line`` is 1-based (0 for whole-input errors)."""

    def __init__(self, message, line=0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph in canonical CSR form.

    ``indptr``/``indices`` hold strictly increasing neighbor lists, the
    adjacency is symmetric and has no self-loops.  ``labels[i]`` is the
    original identifier of node ``i``.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        indptr = np.asarray(self.indptr, dtype=np.int64)
        indices = np.asarray(self.indices, dtype=np.int64)
        indptr.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        labels = np.arange(self.n) if self.labels is None else np.asarray(self.labels)
        if len(labels) != self.n:
            raise ValueError("labels must have one entry per node")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def edge_count(self):
        return int(len(self.indices) // 2)

    @property
    def degrees(self):
        return np.diff(self.indptr)

    def neighbors(self, i):
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def edges(self):
        """Array of shape (edge_count, 2) with ``i < j``, sorted."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        mask = rows < self.indices
        return np.column_stack([rows[mask], self.indices[mask]])

    def to_csr(self, dtype=float):
        data = np.ones(len(self.indices), dtype=dtype)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))

    def to_dense(self, dtype=float):
        return self.to_csr(dtype).toarray()

    def subgraph(self, nodes):
        """Induced subgraph on ``nodes`` (kept in increasing order)."""
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        sub = self.to_csr()[nodes][:, nodes].tocsr()
        sub.sort_indices()
        return Graph(len(nodes), sub.indptr, sub.indices, self.labels[nodes])

    def audit(self):
        """Full scan of the structural invariants; raises AssertionError on failure."""
        deg = self.degrees
        assert len(self.indptr) == self.n + 1 and self.indptr[0] == 0
        for i in range(self.n):
            nb = self.neighbors(i)
            assert np.all(np.diff(nb) > 0), f"neighbors of {i} not strictly increasing"
            assert not np.any(nb == i), f"self-loop at {i}"
        csr = self.to_csr()
        assert (csr != csr.T).nnz == 0, "adjacency not symmetric"
        assert deg.sum() == 2 * self.edge_count
        return True

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self):
        return f"Graph(n={self.n}, edge_count={self.edge_count})"


@dataclass(frozen=True)
class GraphStats:
    n: int
    edge_count: int
    edge_density: float
    max_degree: int
    mean_degree: float


@dataclass
class ParseReport:
    lines: int = 0
    comments: int = 0
    raw_edges: int = 0
    duplicates: int = 0
    self_loops: int = 0


def from_edges(n, edges, labels=None):
    """Build a canonical graph from an iterable of index pairs.

    Duplicates and self-loops are discarded.
    """
    e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    e = e.reshape(-1, 2)
    if len(e) and (e.min() < 0 or e.max() >= n):
        raise ValueError("edge endpoint outside 0..n-1")
    e = e[e[:, 0] != e[:, 1]]
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    m.sum_duplicates()
    m.sort_indices()
    return Graph(n, m.indptr, m.indices, labels)


def from_adjacency(adjacency, labels=None):
    """Graph from a square 0/1 matrix (dense or sparse); only nonzeros matter."""
    m = sp.csr_matrix(adjacency)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"adjacency must be square, got {m.shape}")
    m = m.astype(bool).astype(np.int8)
    if (m != m.T).nnz:
        raise ValueError("adjacency matrix is not symmetric")
    m.setdiag(0)
    m.eliminate_zeros()
    m.sort_indices()
    return Graph(m.shape[0], m.indptr, m.indices, labels)


def _iter_pairs(text):
    """Yield (line_number, a, b) for each data line."""
    if isinstance(text, str):
        stream = io.StringIO(text)
    else:
        stream = text
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line[0] in "#%":
            yield lineno, None, None
            continue
        parts = line.split()
        if len(parts) < 2:
            raise EdgeListParseError(f"expected two node ids, got {line!r}", lineno)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(f"non-integer node id in {line!r}", lineno) from None
        yield lineno, a, b


def _compact(pairs, one_based, compact):
    ids = pairs.ravel() - (1 if one_based else 0)
    if compact:
        # first-appearance order
        uniq, first = np.unique(ids, return_index=True)
        order = np.argsort(first, kind="stable")
        labels = uniq[order]
        remap = np.empty(len(uniq), dtype=np.int64)
        remap[order] = np.arange(len(uniq))
        idx = remap[np.searchsorted(uniq, ids)]
        return idx.reshape(-1, 2), labels
    if len(ids) and ids.min() < 0:
        raise EdgeListParseError("negative node id with compaction disabled")
    n = int(ids.max()) + 1 if len(ids) else 0
    return ids.reshape(-1, 2), np.arange(n)


def parse_directed_pairs(text):
    """Read raw ordered pairs from edge-list text (no canonicalization)."""
    pairs = [(a, b) for _, a, b in _iter_pairs(text) if a is not None]
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def parse_edge_list(text, one_based=False, *, compact=True, return_report=False):
    """Parse an undirected edge list.

    Lines starting with ``#`` or ``%`` are comments.  Node identifiers are
    compacted to ``0..n-1`` in order of first appearance (``labels`` keeps
    the originals), duplicates collapse and self-loops are dropped.
    """
    report = ParseReport()
    pairs = []
    for lineno, a, b in _iter_pairs(text):
        report.lines = lineno
        if a is None:
            report.comments += 1
            continue
        pairs.append((a, b))
    if not pairs:
        raise EdgeListParseError("empty edge list")
    arr = np.asarray(pairs, dtype=np.int64)
    report.raw_edges = len(arr)
    idx, labels = _compact(arr, one_based, compact)
    loops = idx[:, 0] == idx[:, 1]
    report.self_loops = int(loops.sum())
    kept = np.sort(idx[~loops], axis=1)
    report.duplicates = int(len(kept) - len(np.unique(kept, axis=0))) if len(kept) else 0
    g = from_edges(len(labels), kept, labels)
    return (g, report) if return_report else g


def symmetrize_directed(pairs, mode="mutual", labels=None):
    """Undirected graph from directed pairs.

    ``mutual`` keeps {i, j} only if both (i, j) and (j, i) occur; ``union``
    keeps it if either does.  Node ids are compacted in first-appearance
    order unless ``labels`` is given, in which case pairs are already indices.
    """
    if mode not in ("mutual", "union"):
        raise ValueError(f"mode must be 'mutual' or 'union', got {mode!r}")
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if labels is None:
        idx, labels = _compact(arr, False, True)
    else:
        idx = arr
    n = len(labels)
    idx = idx[idx[:, 0] != idx[:, 1]]
    d = sp.csr_matrix((np.ones(len(idx)), (idx[:, 0], idx[:, 1])), shape=(n, n))
    d.data[:] = 1.0
    d.sum_duplicates()
    d.data[:] = 1.0
    und = d.multiply(d.T) if mode == "mutual" else d.maximum(d.T)
    und = sp.csr_matrix(und)
    und.eliminate_zeros()
    und.sort_indices()
    return Graph(n, und.indptr, und.indices, labels)


def largest_connected_component(g):
    """Induced subgraph on the largest connected component.

    Ties go to the component containing the smallest node index.  Nodes keep
    their relative order.
    """
    if g.n == 0:
        raise ValueError("graph has no nodes")
    _, comp = connected_components(g.to_csr(), directed=False)
    sizes = np.bincount(comp)
    first_node = np.full(len(sizes), g.n, dtype=np.int64)
    np.minimum.at(first_node, comp, np.arange(g.n))
    tied = np.flatnonzero(sizes == sizes.max())
    winner = tied[np.argmin(first_node[tied])]
    return g.subgraph(np.flatnonzero(comp == winner))


def graph_stats(g):
    n = g.n
    deg = g.degrees
    density = 2.0 * g.edge_count / (n * (n - 1)) if n > 1 else 0.0
    return GraphStats(
        n=n,
        edge_count=g.edge_count,
        edge_density=density,
        max_degree=int(deg.max()) if n else 0,
        mean_degree=float(deg.mean()) if n else 0.0,
    )


def format_edge_list(g):
    """Canonical text form: one ``i j`` line per edge, ``i < j``, zero-based."""
    e = g.edges()
    return "".join(f"{i} {j}\n" for i, j in e)


def write_edge_list(g, path):
    Path(path).write_text(format_edge_list(g), encoding="utf-8")


def read_edge_list(path, *, directed=False, mode="mutual", one_based=False, return_report=False):
    """Read an edge-list file; ``directed`` files are symmetrized with ``mode``."""
    with open(path, encoding="utf-8") as fh:
        if directed:
            pairs = parse_directed_pairs(fh)
            if not len(pairs):
                raise EdgeListParseError("empty edge list")
            g = symmetrize_directed(pairs - (1 if one_based else 0), mode=mode)
            return (g, ParseReport(raw_edges=len(pairs))) if return_report else g
        return parse_edge_list(fh, one_based, return_report=return_report)
