"""Task relatedness measures and the multitask operators built from them.

Pairwise measures over tasks feed a symmetric, zero-diagonal interaction
matrix with entries in [0, 1].  From a dissimilarity matrix the operator
``(gamma*I + L)^p`` is formed (L the matrix Laplacian); from a similarity
matrix the operator ``(gamma*I + L)^{-1}``.  Right-multiplying a score or
sign-label matrix by the dissimilarity operator rescales each label without
flipping its sign, which is what lets rare positives survive propagation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .config import STAGE_TASK_MATRIX
from .ontology import (
    AnnotationTable,
    OntologyDag,
    TaskSet,
    branch_corpus_sizes,
    min_frequency_common_ancestor,
    term_frequency,
)

logger = logging.getLogger(__name__)

MEASURES = ("diss0", "sim1", "sim2", "sim3", "diss3")
DISSIMILARITY_MEASURES = ("diss0", "diss3")
SIMILARITY_MEASURES = ("sim1", "sim2", "sim3")

ALLOWED_POWERS = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)


def diss0(nu_k: float, nu_r: float, nu_ma: float) -> float:
    """Information-content distance between two terms given their common ancestor.

    ``-log(nu_k) - log(nu_r) + 2*log(nu_ma)`` with natural logarithms; the
    ancestor frequency must dominate both term frequencies, which holds on
    any closed annotation table.
    """
    if nu_ma <= 0:
        raise ValueError("ancestor frequency must be positive")
    if nu_ma < max(nu_k, nu_r):
        raise ValueError(
            "ancestor frequency below term frequency: annotation table is not closed"
        )
    return -math.log(nu_k) - math.log(nu_r) + 2.0 * math.log(nu_ma)


def sim_jiang(d0: float) -> float:
    """Similarity ``1 / (1 + d0)`` from an information-content distance."""
    if d0 < 0:
        raise ValueError("distance must be non-negative")
    return 1.0 / (1.0 + d0)


def sim_lin(nu_k: float, nu_r: float, nu_ma: float) -> float:
    """Ratio similarity ``2*log(nu_ma) / (log(nu_k) + log(nu_r))``.

    Conventions at the boundary: a zero-information ancestor (frequency 1)
    gives 0; identical terms give 1 (the formula already does).  Two terms of
    frequency 1 leave the ratio undefined.
    """
    denom = math.log(nu_k) + math.log(nu_r)
    if denom == 0.0:
        raise ValueError("undefined (zero denominator): both terms have frequency 1")
    if nu_ma >= 1.0:
        return 0.0
    return 2.0 * math.log(nu_ma) / denom


def sim_ic_jaccard(pk, pr) -> float:
    """Jaccard overlap of two positive-instance sets; 0 when both are empty."""
    pk, pr = set(pk), set(pr)
    union = pk | pr
    if not union:
        return 0.0
    return len(pk & pr) / len(union)


@dataclass(frozen=True)
class TaskMatrix:
    """Symmetric task interaction matrix with zero diagonal and entries in [0, 1]."""

    m: int
    values: np.ndarray
    kind: str  # "similarity" | "dissimilarity"

    def __post_init__(self):
        v = self.values
        if self.kind not in ("similarity", "dissimilarity"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if v.shape != (self.m, self.m):
            raise ValueError(f"expected shape ({self.m}, {self.m}), got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("non-finite entries in task matrix")
        if np.diagonal(v).any():
            raise ValueError("task matrix diagonal must be zero")
        if not np.array_equal(v, v.T):
            raise ValueError("task matrix must be symmetric")
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("task matrix entries must lie in [0, 1]")


@dataclass(frozen=True)
class MultitaskMap:
    """Dense operator applied on the right of an n-by-m score matrix."""

    m: int
    operator: np.ndarray
    mode: str  # "dissimilarity-power" | "similarity-inverse"
    gamma: float
    p: float


def _laplacian(values: np.ndarray) -> np.ndarray:
    return np.diag(values.sum(axis=1)) - values


def build_task_matrix(
    ts: TaskSet,
    measure: str,
    dag: OntologyDag | None = None,
    table: AnnotationTable | None = None,
) -> TaskMatrix:
    """Evaluate a pairwise measure over all task pairs of the set.

    Hierarchy measures (diss0, sim1, sim2) need the DAG and a closed table;
    overlap measures (sim3, diss3) only need positive sets.  The raw diss0
    matrix is divided by its largest off-diagonal entry to land in [0, 1];
    the other measures are already bounded.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    if table is None:
        raise ValueError("an annotation table is required")
    m = len(ts)
    values = np.zeros((m, m), dtype=np.float64)
    if m < 2:  # no pairs, nothing to normalize
        kind = "dissimilarity" if measure in DISSIMILARITY_MEASURES else "similarity"
        return TaskMatrix(m, values, kind)

    if measure in ("sim3", "diss3"):
        pos = [table.positives(k) for k in ts.terms]
        for a in range(m):
            for b in range(a + 1, m):
                s = sim_ic_jaccard(pos[a], pos[b])
                values[a, b] = values[b, a] = s if measure == "sim3" else 1.0 - s
        kind = "similarity" if measure == "sim3" else "dissimilarity"
        return TaskMatrix(m, values, kind)

    if dag is None:
        raise ValueError(f"measure {measure!r} requires the term hierarchy")
    if not table.closed:
        raise ValueError(f"measure {measure!r} requires a closed annotation table")
    corpus = branch_corpus_sizes(table, dag)
    nu = {}
    for k in ts.terms:
        nu[k] = term_frequency(table, k, corpus[dag.branches[k]])
    for a in range(m):
        ka = ts.terms[a]
        for b in range(a + 1, m):
            kb = ts.terms[b]
            ma = min_frequency_common_ancestor(dag, table, ka, kb, corpus[dag.branches[ka]])
            nu_ma = term_frequency(table, ma, corpus[dag.branches[ma]])
            if measure == "diss0":
                v = diss0(nu[ka], nu[kb], nu_ma)
            elif measure == "sim1":
                v = sim_jiang(diss0(nu[ka], nu[kb], nu_ma))
            else:
                v = sim_lin(nu[ka], nu[kb], nu_ma)
            values[a, b] = values[b, a] = v
    if measure == "diss0":
        top = values.max()
        if top == 0.0:
            raise ValueError("degenerate dissimilarity: all tasks carry identical information")
        values = values / top
        np.fill_diagonal(values, 0.0)
        return TaskMatrix(m, values, "dissimilarity")
    return TaskMatrix(m, values, "similarity")


def build_map(tm: TaskMatrix, gamma: float, p: float = 1.0) -> MultitaskMap:
    """Build the right-multiplication operator for a task matrix.

    Dissimilarity kind yields ``(gamma*I + L)^p`` with p either 1/2 (via
    symmetric eigendecomposition) or a positive integer (repeated
    multiplication).  Similarity kind yields ``(gamma*I + L)^{-1}`` via a
    Cholesky factorization; p is fixed to 1 there.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not np.isfinite(tm.values).all():
        raise ValueError("non-finite entries in task matrix")
    base = gamma * np.eye(tm.m) + _laplacian(tm.values)
    if tm.kind == "dissimilarity":
        if p not in ALLOWED_POWERS:
            raise ValueError(f"power must be one of {ALLOWED_POWERS}, got {p}")
        if p == 0.5:
            w, v = scipy.linalg.eigh(base)
            if w.min() <= 0:
                raise ValueError("operator is not positive definite")
            op = (v * np.sqrt(w)) @ v.T
            op = (op + op.T) / 2.0
        else:
            op = np.linalg.matrix_power(base, int(p))
        return MultitaskMap(tm.m, op, "dissimilarity-power", gamma, float(p))
    try:
        c, low = scipy.linalg.cho_factor(base)
        op = scipy.linalg.cho_solve((c, low), np.eye(tm.m))
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(f"factorization failed, operator not positive definite: {exc}")
    op = (op + op.T) / 2.0
    return MultitaskMap(tm.m, op, "similarity-inverse", gamma, 1.0)


def apply_map_closed_form(Y: np.ndarray, tm: TaskMatrix, gamma: float) -> np.ndarray:
    """Transform sign labels without forming the operator (power 1 only).

    Each +1 becomes ``gamma + 2 * (interaction mass of the instance's
    negative tasks)``; each -1 becomes ``-gamma - 2 * (interaction mass of
    its positive tasks)``.  Equals ``Y @ (gamma*I + L)`` entrywise.
    """
    if tm.kind != "dissimilarity":
        raise ValueError("closed form applies to dissimilarity matrices only")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] != tm.m:
        raise ValueError(f"label matrix shape {Y.shape} does not match m={tm.m}")
    if not np.isin(Y, (-1.0, 1.0)).all():
        raise ValueError("label matrix entries must be -1 or +1")
    pos = (Y > 0).astype(np.float64)
    d_plus = pos @ tm.values
    d_minus = (1.0 - pos) @ tm.values
    return np.where(Y > 0, gamma + 2.0 * d_minus, -gamma - 2.0 * d_plus)


def random_task_matrix(
    m: int, density: float, tau: float, seed: int, stream: int = 0
) -> TaskMatrix:
    """Random symmetric dissimilarity matrix for ablation runs.

    Each off-diagonal pair is independently nonzero with probability
    ``density``; nonzero weights are uniform on (0, tau].  Deterministic
    given the seed (numpy PCG64 behind a fixed stage tag); ``stream``
    separates independent draws under one root seed, e.g. per task group.
    """
    if m < 2:
        raise ValueError("need at least two tasks")
    if not (0 < density <= 1):
        raise ValueError("density must lie in (0, 1]")
    if not (0 < tau <= 1):
        raise ValueError("tau must lie in (0, 1]")
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(int(seed), STAGE_TASK_MATRIX, int(stream)))
    )
    iu = np.triu_indices(m, k=1)
    npairs = iu[0].size
    mask = rng.random(npairs) < density
    weights = tau * (1.0 - rng.random(npairs))  # uniform on (0, tau]
    vals = np.where(mask, weights, 0.0)
    out = np.zeros((m, m), dtype=np.float64)
    out[iu] = vals
    out = out + out.T
    return TaskMatrix(m, out, "dissimilarity")


def save_task_matrix(path, tm: TaskMatrix) -> None:
    """Write the full symmetric matrix row-major behind a one-line header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kind={tm.kind} m={tm.m}\n")
        for row in tm.values:
            fh.write("\t".join(repr(x) for x in row) + "\n")


def load_task_matrix(path) -> TaskMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# "):
            raise ValueError(f"{path}: missing task-matrix header")
        fields = dict(part.split("=", 1) for part in header[2:].split())
        kind = fields["kind"]
        m = int(fields["m"])
        rows = [
            [float(x) for x in line.split("\t")]
            for line in fh
            if line.strip()
        ]
    values = np.asarray(rows, dtype=np.float64)
    return TaskMatrix(m, values, kind)
