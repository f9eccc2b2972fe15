"""Sparse symmetric graphs, per-network normalization and integration.

Graphs are immutable once built: vertex count, a CSR adjacency storing both
directions of every undirected edge, and the cached degree vector.  Vertex
identity within a single file is positional; names live next to the graph in
a separate list and the integration step aligns networks on names.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class SparseGraph:
    """Symmetric weighted graph with non-negative weights and no self-loops.

    Parameters
    ----------
    matrix : scipy.sparse matrix, shape (n, n)
        Adjacency; must be symmetric with a zero diagonal and strictly
        positive stored weights.  Converted to canonical CSR.
    """

    def __init__(self, matrix: sp.spmatrix):
        m = sp.csr_matrix(matrix, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"adjacency must be square, got {m.shape}")
        m.sum_duplicates()
        m.eliminate_zeros()
        if m.diagonal().any():
            raise ValueError("adjacency has nonzero diagonal entries")
        if m.nnz and m.data.min() <= 0:
            raise ValueError("stored edge weights must be strictly positive")
        if (m != m.T).nnz != 0:
            raise ValueError("adjacency is not symmetric")
        self.matrix = m
        self.degrees = np.asarray(m.sum(axis=1)).ravel()

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges (each stored twice in CSR)."""
        return self.matrix.nnz // 2

    @classmethod
    def from_edges(cls, n, sources, targets, weights) -> "SparseGraph":
        """Build from undirected edge triples; duplicates are summed.

        Self-loops are dropped (with a logged count) so the zero-diagonal
        invariant holds for arbitrary input data.
        """
        src = np.asarray(sources, dtype=np.int64)
        dst = np.asarray(targets, dtype=np.int64)
        w = np.asarray(weights, dtype=np.float64)
        loops = src == dst
        if loops.any():
            logger.info("dropping %d self-loop(s)", int(loops.sum()))
            src, dst, w = src[~loops], dst[~loops], w[~loops]
        rows = np.concatenate([src, dst])
        cols = np.concatenate([dst, src])
        data = np.concatenate([w, w])
        return cls(sp.coo_matrix((data, (rows, cols)), shape=(n, n)))

    def neighbors(self, i: int):
        """Return (neighbor indices, weights) of vertex ``i`` as views."""
        lo, hi = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return self.matrix.indices[lo:hi], self.matrix.data[lo:hi]

    def equals(self, other: "SparseGraph") -> bool:
        """Exact structural and numerical equality."""
        a, b = self.matrix, other.matrix
        return (
            a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    def __repr__(self) -> str:
        return f"SparseGraph(n={self.n}, edges={self.num_edges})"


def normalize_symmetric(g: SparseGraph) -> SparseGraph:
    """Symmetric degree normalization: weight(i,j) / sqrt(d_i * d_j).

    Zero-degree vertices keep their all-zero rows (the 0/0 case never
    materializes because such vertices store no edges).  The output matrix
    has spectral radius at most 1.
    """
    d = g.degrees
    scale = np.zeros_like(d)
    nz = d > 0
    scale[nz] = 1.0 / np.sqrt(d[nz])
    m = g.matrix.copy()
    # scale rows then columns: D^{-1/2} W D^{-1/2}
    m = sp.diags(scale) @ m @ sp.diags(scale)
    return SparseGraph(m)


def laplacian_quadratic(g: SparseGraph, f) -> float:
    """Quadratic smoothness of ``f``: (1/4) * sum over edges of w*(f_i-f_j)^2.

    Equals one quarter of f^T (D - W) f; for sign vectors this is the total
    weight of edges whose endpoints disagree.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (g.n,):
        raise ValueError(f"vector length {f.shape} does not match n={g.n}")
    m = g.matrix.tocoo()
    half = m.row < m.col  # each undirected edge once
    diff = f[m.row[half]] - f[m.col[half]]
    return 0.25 * float(np.dot(m.data[half], diff * diff))


@dataclass(frozen=True)
class NetworkEntry:
    name: str
    graph: SparseGraph
    vertex_names: tuple

    def __post_init__(self):
        if len(self.vertex_names) != self.graph.n:
            raise ValueError(
                f"network {self.name!r}: {len(self.vertex_names)} names for "
                f"{self.graph.n} vertices"
            )


class NetworkCollection:
    """A named set of graphs over overlapping vertex-name universes.

    ``union_vertices`` is the lexicographically sorted union of all member
    vertex names, which fixes the indexing of the integrated graph and makes
    downstream outputs byte-reproducible.
    """

    def __init__(self, entries):
        self.entries = [
            e if isinstance(e, NetworkEntry) else NetworkEntry(e[0], e[1], tuple(e[2]))
            for e in entries
        ]
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate network name in collection")
        union = set()
        for e in self.entries:
            union.update(e.vertex_names)
        self.union_vertices = sorted(union)
        self._union_index = {v: i for i, v in enumerate(self.union_vertices)}

    def __len__(self) -> int:
        return len(self.entries)

    def union_index(self, vertex_name: str) -> int:
        return self._union_index[vertex_name]


def integrate_networks(c: NetworkCollection) -> SparseGraph:
    """Sum member networks entrywise on the union of their vertices.

    Members are expected to be individually normalized already; the sum is
    unweighted and the result is not re-normalized.  Accumulation iterates
    networks in name order, so any permutation of the collection yields a
    bit-identical graph.
    """
    if len(c) == 0:
        raise ValueError("no networks")
    n = len(c.union_vertices)
    total = sp.csr_matrix((n, n), dtype=np.float64)
    for entry in sorted(c.entries, key=lambda e: e.name):
        lift = np.fromiter(
            (c.union_index(v) for v in entry.vertex_names),
            dtype=np.int64,
            count=len(entry.vertex_names),
        )
        m = entry.graph.matrix.tocoo()
        lifted = sp.coo_matrix(
            (m.data, (lift[m.row], lift[m.col])), shape=(n, n)
        )
        total = (total + lifted.tocsr()).tocsr()
    return SparseGraph(total)


def read_network_tsv(path) -> tuple[SparseGraph, list]:
    """Read a three-column edge list: source, target, weight (tab-separated).

    A header line is recognized by a non-numeric third field and skipped, as
    are blank lines and lines starting with ``#``.  Vertex names are sorted
    lexicographically to fix the index order.  Weights must parse as strictly
    positive floats; duplicate edges are summed with a warning.
    """
    triples = []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            try:
                w = float(parts[2])
            except ValueError:
                if not header_seen and not triples:
                    header_seen = True
                    continue
                raise ValueError(f"{path}:{lineno}: non-numeric weight {parts[2]!r}")
            if not np.isfinite(w) or w <= 0:
                raise ValueError(f"{path}:{lineno}: weight must be positive, got {parts[2]}")
            triples.append((parts[0], parts[1], w))
    names = sorted({t[0] for t in triples} | {t[1] for t in triples})
    index = {v: i for i, v in enumerate(names)}
    seen = set()
    dup = 0
    src, dst, wts = [], [], []
    for a, b, w in triples:
        i, j = index[a], index[b]
        key = (i, j) if i <= j else (j, i)
        if key in seen:
            dup += 1
        seen.add(key)
        src.append(i)
        dst.append(j)
        wts.append(w)
    if dup:
        logger.warning("%s: %d duplicate edge(s) summed", path, dup)
    return SparseGraph.from_edges(len(names), src, dst, wts), names


def write_network_tsv(path, g: SparseGraph, names) -> None:
    """Write each undirected edge once, with full-precision weights."""
    if len(names) != g.n:
        raise ValueError("name list does not match vertex count")
    m = g.matrix.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("source\ttarget\tweight\n")
        for i, j, w in zip(m.row, m.col, m.data):
            if i < j:
                fh.write(f"{names[i]}\t{names[j]}\t{w!r}\n")
