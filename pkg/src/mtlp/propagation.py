"""Harmonic label propagation, multitask scoring and baseline predictors.

The propagation solve clamps training vertices to their labels and extends
them harmonically: on the test block it solves
``(D_UU - W_UU) f_U = W_US y_S`` with a Jacobi-preconditioned conjugate
gradient.  Test vertices in components that contain no training vertex have
a singular system and receive the neutral score 0 instead.

Multitask variants first propagate every task column independently and then
right-multiply the test-score block by the task operator; because the solve
is linear in the training labels this equals transforming the labels first.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, cg

from .graph import NetworkCollection, SparseGraph
from .relatedness import MultitaskMap

logger = logging.getLogger(__name__)

# Stricter than the 1e-8 contract ceiling so that downstream comparisons
# against dense solves stay below 1e-8 with margin.
DEFAULT_RTOL = 1e-12
MAX_ITER_FACTOR = 10


class ConvergenceError(RuntimeError):
    """Conjugate gradient hit the iteration cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class DegenerateFoldError(ValueError):
    """A training fold contains a single class; the task/fold pair is unusable."""


@dataclass(frozen=True)
class Partition:
    """Disjoint training/test split of the vertex set."""

    train: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "train", np.unique(np.asarray(self.train, dtype=np.int64)))
        object.__setattr__(self, "test", np.unique(np.asarray(self.test, dtype=np.int64)))
        if self.train.size == 0:
            raise ValueError("training set is empty")
        if np.intersect1d(self.train, self.test).size:
            raise ValueError("training and test sets overlap")

    def check(self, n: int) -> None:
        if self.train.size + self.test.size != n:
            raise ValueError("partition does not cover the vertex set")
        if self.train.size and (self.train.min() < 0 or self.train.max() >= n):
            raise ValueError("training index out of range")
        if self.test.size and (self.test.min() < 0 or self.test.max() >= n):
            raise ValueError("test index out of range")


def normalize_training_labels(y_S: np.ndarray) -> np.ndarray:
    """Rescale sign labels so positives sum to +1 and negatives to -1."""
    y = np.asarray(y_S, dtype=np.float64)
    npos = int((y > 0).sum())
    nneg = int((y < 0).sum())
    if npos == 0 or nneg == 0:
        raise DegenerateFoldError("degenerate fold: single-class training labels")
    out = np.where(y > 0, 1.0 / npos, -1.0 / nneg)
    return out


class LinearPropagator:
    """Factored propagation system for one graph/partition pair.

    Precomputes the reachable test block once so that per-task solves only
    pay for the conjugate gradient iterations.
    """

    def __init__(self, g: SparseGraph, part: Partition, rtol: float = DEFAULT_RTOL):
        part.check(g.n)
        self.g = g
        self.part = part
        self.rtol = rtol
        n_comp, comp = connected_components(g.matrix, directed=False)
        live = np.zeros(n_comp, dtype=bool)
        live[comp[part.train]] = True
        test = part.test
        self.active_mask = live[comp[test]]  # test vertices reachable from training
        active = test[self.active_mask]
        self.system = None
        if active.size:
            d = g.degrees[active]
            W_UU = g.matrix[active][:, active]
            A = sp.diags(d) - W_UU
            self.W_US = g.matrix[active][:, part.train].tocsr()
            inv_diag = 1.0 / d  # active vertices always have positive degree
            M = LinearOperator(A.shape, matvec=lambda x: inv_diag * x)
            self.system = (A.tocsr(), M)
        if test.size and not self.active_mask.all():
            logger.debug(
                "%d test vertex(es) unreachable from training; scored 0",
                int((~self.active_mask).sum()),
            )

    def solve(self, y_S: np.ndarray) -> np.ndarray:
        """Scores over the test set for one column of training values."""
        y = np.asarray(y_S, dtype=np.float64)
        if y.shape != (self.part.train.size,):
            raise ValueError(
                f"training vector length {y.shape} does not match |S|={self.part.train.size}"
            )
        out = np.zeros(self.part.test.size, dtype=np.float64)
        if self.system is None:
            return out
        A, M = self.system
        b = self.W_US @ y
        maxiter = max(MAX_ITER_FACTOR * self.g.n, 10)
        x, info = cg(A, b, rtol=self.rtol, atol=0.0, maxiter=maxiter, M=M)
        if info != 0:
            residual = float(np.linalg.norm(b - A @ x))
            raise ConvergenceError(
                f"conjugate gradient failed to converge within {maxiter} iterations "
                f"(residual {residual:.3e})",
                residual,
            )
        out[self.active_mask] = x
        return out


def solve_lp(g: SparseGraph, part: Partition, y_S: np.ndarray, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """One-column harmonic propagation; see :class:`LinearPropagator`."""
    return LinearPropagator(g, part, rtol=rtol).solve(y_S)


def propagate_all_tasks(
    g: SparseGraph,
    part: Partition,
    Y_S: np.ndarray,
    label_mode: str = "raw",
    rtol: float = DEFAULT_RTOL,
    workers: int = 1,
) -> tuple[np.ndarray, dict]:
    """Propagate every task column independently.

    Returns the test-block score matrix and a dict of per-column failures
    (column index -> message).  Failed columns score 0 and are reported
    rather than aborting the batch.
    """
    if label_mode not in ("raw", "class-normalized"):
        raise ValueError(f"unknown label mode {label_mode!r}")
    Y_S = np.asarray(Y_S, dtype=np.float64)
    if Y_S.ndim != 2 or Y_S.shape[0] != part.train.size:
        raise ValueError(f"training label block shape {Y_S.shape} does not match |S|")
    prop = LinearPropagator(g, part, rtol=rtol)
    m = Y_S.shape[1]
    F = np.zeros((part.test.size, m), dtype=np.float64)
    failures: dict[int, str] = {}

    def run_column(k: int):
        y = Y_S[:, k]
        if label_mode == "class-normalized":
            y = normalize_training_labels(y)
        return prop.solve(y)

    def safe(k: int):
        try:
            return k, run_column(k), None
        except (DegenerateFoldError, ConvergenceError) as exc:
            return k, None, str(exc)

    if workers > 1 and m > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(safe, range(m)))
    else:
        results = [safe(k) for k in range(m)]
    for k, col, err in results:
        if err is None:
            F[:, k] = col
        else:
            failures[k] = err
            logger.warning("task column %d skipped: %s", k, err)
    return F, failures


def _multitask_scores(
    g: SparseGraph,
    part: Partition,
    Y: np.ndarray,
    mmap: MultitaskMap,
    expected_mode: str,
    normalize_labels: bool,
    rtol: float,
    workers: int,
) -> tuple[np.ndarray, dict]:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != g.n:
        raise ValueError(f"label matrix shape {Y.shape} does not match n={g.n}")
    if Y.shape[1] != mmap.m:
        raise ValueError(f"label matrix has {Y.shape[1]} tasks but operator has {mmap.m}")
    if mmap.mode != expected_mode:
        raise ValueError(f"operator mode {mmap.mode!r}, expected {expected_mode!r}")
    F, failures = propagate_all_tasks(
        g,
        part,
        Y[part.train],
        label_mode="class-normalized" if normalize_labels else "raw",
        rtol=rtol,
        workers=workers,
    )
    return F @ mmap.operator, failures


def mtlp(
    g: SparseGraph,
    part: Partition,
    Y: np.ndarray,
    mmap: MultitaskMap,
    normalize_labels: bool = False,
    rtol: float = DEFAULT_RTOL,
    workers: int = 1,
) -> np.ndarray:
    """Dissimilarity-driven multitask propagation: propagate, then apply the
    dissimilarity operator on the right."""
    scores, _ = _multitask_scores(
        g, part, Y, mmap, "dissimilarity-power", normalize_labels, rtol, workers
    )
    return scores


def mtlp_inv(
    g: SparseGraph,
    part: Partition,
    Y: np.ndarray,
    mmap: MultitaskMap,
    normalize_labels: bool = False,
    rtol: float = DEFAULT_RTOL,
    workers: int = 1,
) -> np.ndarray:
    """Similarity-driven multitask propagation via the inverse operator."""
    scores, _ = _multitask_scores(
        g, part, Y, mmap, "similarity-inverse", normalize_labels, rtol, workers
    )
    return scores


def baseline_gba(g: SparseGraph, part: Partition, y_S: np.ndarray) -> np.ndarray:
    """Weighted mean label of labeled neighbors; 0 without labeled neighbors."""
    part.check(g.n)
    y = np.asarray(y_S, dtype=np.float64)
    if y.shape != (part.train.size,):
        raise ValueError("training vector length does not match |S|")
    W_US = g.matrix[part.test][:, part.train]
    num = W_US @ y
    den = np.asarray(W_US.sum(axis=1)).ravel()
    out = np.zeros(part.test.size, dtype=np.float64)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def baseline_random_walk(
    g: SparseGraph, part: Partition, y_S: np.ndarray, steps: int = 100
) -> np.ndarray:
    """Probability mass on test vertices after a t-step walk from the positives.

    Mass starts uniform on positive training vertices and moves along the
    row-normalized adjacency; zero-degree rows retain no outgoing mass.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    part.check(g.n)
    y = np.asarray(y_S, dtype=np.float64)
    if y.shape != (part.train.size,):
        raise ValueError("training vector length does not match |S|")
    seeds = part.train[y > 0]
    if seeds.size == 0:
        raise ValueError("empty seed set: no positive training vertex")
    d = g.degrees
    inv_d = np.zeros_like(d)
    nz = d > 0
    inv_d[nz] = 1.0 / d[nz]
    P = sp.diags(inv_d) @ g.matrix  # row-stochastic on non-isolated rows
    PT = P.T.tocsr()
    s = np.zeros(g.n, dtype=np.float64)
    s[seeds] = 1.0 / seeds.size
    for _ in range(steps):
        s = PT @ s
    return s[part.test]


def baseline_knn(
    nc: NetworkCollection, part: Partition, y_S: np.ndarray, k: int = 5
) -> np.ndarray:
    """Per-network k-nearest-labeled-neighbor scores, averaged over networks.

    Within each network the k labeled neighbors with the largest edge weight
    contribute weight*label, divided by k even when fewer are available.
    Equal weights break toward the smaller local vertex index.  A vertex's
    final score averages over the networks that contain it; vertices absent
    from every network score 0.
    """
    if k < 1:
        raise ValueError("neighbor count must be at least 1")
    n_union = len(nc.union_vertices)
    part.check(n_union)
    y = np.asarray(y_S, dtype=np.float64)
    if y.shape != (part.train.size,):
        raise ValueError("training vector length does not match |S|")
    label_of = dict(zip(part.train.tolist(), y.tolist()))
    total = np.zeros(part.test.size, dtype=np.float64)
    containing = np.zeros(part.test.size, dtype=np.int64)
    test_pos = {v: i for i, v in enumerate(part.test.tolist())}
    for entry in nc.entries:
        local_union = np.fromiter(
            (nc.union_index(v) for v in entry.vertex_names),
            dtype=np.int64,
            count=len(entry.vertex_names),
        )
        local_label = {}
        for local, u in enumerate(local_union):
            if u in label_of:
                local_label[local] = label_of[u]
        for local, u in enumerate(local_union):
            slot = test_pos.get(int(u))
            if slot is None:
                continue
            containing[slot] += 1
            idx, w = entry.graph.neighbors(local)
            labeled = [(float(w[t]), int(idx[t])) for t in range(idx.size) if int(idx[t]) in local_label]
            if not labeled:
                continue
            labeled.sort(key=lambda pair: (-pair[0], pair[1]))
            top = labeled[:k]
            total[slot] += sum(wt * local_label[j] for wt, j in top) / k
    out = np.zeros(part.test.size, dtype=np.float64)
    nz = containing > 0
    out[nz] = total[nz] / containing[nz]
    return out
