"""Seeded generator of desk-scale benchmark instances.

Tasks form a truncated complete b-ary tree.  Protein memberships are sampled
top-down so the closure property holds by construction: a protein can be
positive for a node only when it is positive for the node's parent, with the
conditional rate chosen to hit the configured marginal rate per depth.  The
graph connects co-positive proteins of each leaf task with elevated
probability and weight over a uniform background, giving the rare deep tasks
a recoverable community structure drowned in mostly-negative noise.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .config import STAGE_SYNTHETIC
from .graph import SparseGraph, write_network_tsv
from .ontology import AnnotationTable, OntologyDag

_MAX_RESAMPLE = 100


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one generated instance."""

    n: int = 300
    m: int = 12
    branching: int = 3
    rates: tuple = (0.3, 0.12, 0.05)  # marginal positive rate per depth
    intra_edge_prob: float = 0.35
    intra_weight: float = 1.0
    background_edge_prob: float = 0.02
    background_weight: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.n < 2 or self.m < 1:
            raise ValueError("need at least 2 proteins and 1 task")
        if self.branching < 1:
            raise ValueError("branching must be at least 1")
        depth = max(_tree_depths(self.m, self.branching))
        if len(self.rates) < depth + 1:
            raise ValueError(
                f"need a positive rate for each of {depth + 1} depths, got {len(self.rates)}"
            )
        prev = 1.0
        for r in self.rates:
            if not (0 < r <= prev):
                raise ValueError("positive rates must be in (0, 1] and decrease with depth")
            prev = r
        if self.n * self.rates[depth] < 1.0:
            raise ValueError("deepest rate yields less than one positive in expectation")
        for p in (self.intra_edge_prob, self.background_edge_prob):
            if not (0 <= p <= 1):
                raise ValueError("edge probabilities must lie in [0, 1]")
        for w in (self.intra_weight, self.background_weight):
            if w <= 0:
                raise ValueError("edge weights must be positive")


@dataclass(frozen=True)
class SyntheticInstance:
    graph: SparseGraph
    protein_names: list
    dag: OntologyDag
    table: AnnotationTable


def tree_parents(m: int, branching: int) -> list:
    """Parent index per node of a complete b-ary tree truncated at m nodes."""
    return [None if k == 0 else (k - 1) // branching for k in range(m)]


def _tree_depths(m: int, branching: int) -> list:
    parents = tree_parents(m, branching)
    depths = [0] * m
    for k in range(1, m):
        depths[k] = depths[parents[k]] + 1
    return depths


def generate_synthetic(spec: SyntheticSpec) -> SyntheticInstance:
    """Build one deterministic (graph, hierarchy, annotations) triple."""
    spec.validate()
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(int(spec.seed), STAGE_SYNTHETIC))
    )
    parents = tree_parents(spec.m, spec.branching)
    depths = _tree_depths(spec.m, spec.branching)
    width = len(str(spec.n - 1))
    protein_names = [f"p{i:0{width}d}" for i in range(spec.n)]
    term_names = [f"t{k:02d}" for k in range(spec.m)]
    dag = OntologyDag(
        term_names,
        [set() if p is None else {p} for p in parents],
        ["BP"] * spec.m,
    )

    def sample_node(k: int, member: np.ndarray) -> np.ndarray:
        """Positive mask for node k given its parent's mask."""
        if parents[k] is None:
            return rng.random(spec.n) < spec.rates[0]
        cond = spec.rates[depths[k]] / spec.rates[depths[k] - 1]
        return member & (rng.random(spec.n) < cond)

    def subtree(k: int) -> list:
        out = [k]
        for child in range(spec.m):
            if parents[child] == k:
                out.extend(subtree(child))
        return out

    masks = np.zeros((spec.m, spec.n), dtype=bool)
    for k in range(spec.m):  # level order: parent precedes child
        masks[k] = sample_node(k, masks[parents[k]] if parents[k] is not None else None)
    for k in range(spec.m):
        attempts = 0
        while not masks[k].any():
            attempts += 1
            if attempts > _MAX_RESAMPLE:
                raise ValueError(f"task {term_names[k]} stayed empty after {_MAX_RESAMPLE} resamples")
            for node in subtree(k):  # keep descendants consistent with the redraw
                masks[node] = sample_node(node, masks[parents[node]] if parents[node] is not None else None)

    sets = [set() for _ in range(spec.n)]
    for k in range(spec.m):
        for i in np.nonzero(masks[k])[0]:
            sets[i].add(k)
    # sampling conditions each node on its parent, so the table is closed
    table = AnnotationTable(protein_names, sets, spec.m, closed=True)

    leaves = [k for k in range(spec.m) if all(parents[c] != k for c in range(spec.m))]
    weights: dict[tuple, float] = {}

    def add_edge(i: int, j: int, w: float) -> None:
        key = (i, j) if i < j else (j, i)
        weights[key] = weights.get(key, 0.0) + w

    for k in leaves:
        members = np.nonzero(masks[k])[0]
        if members.size < 2:
            continue
        ai, bi = np.triu_indices(members.size, k=1)
        hits = rng.random(ai.size) < spec.intra_edge_prob
        for a, b in zip(ai[hits], bi[hits]):
            add_edge(int(members[a]), int(members[b]), spec.intra_weight)
    iu, ju = np.triu_indices(spec.n, k=1)
    hits = rng.random(iu.size) < spec.background_edge_prob
    for i, j in zip(iu[hits], ju[hits]):
        add_edge(int(i), int(j), spec.background_weight)

    keys = sorted(weights)
    graph = SparseGraph.from_edges(
        spec.n,
        [a for a, _ in keys],
        [b for _, b in keys],
        [weights[k] for k in keys],
    )
    return SyntheticInstance(graph, protein_names, dag, table)


def write_instance(directory, instance: SyntheticInstance) -> dict:
    """Write network/ontology/annotation files; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    paths = {
        "network": os.path.join(directory, "network.tsv"),
        "ontology": os.path.join(directory, "ontology.tsv"),
        "annotations": os.path.join(directory, "annotations.tsv"),
    }
    write_network_tsv(paths["network"], instance.graph, instance.protein_names)
    dag = instance.dag
    with open(paths["ontology"], "w", encoding="utf-8") as fh:
        fh.write("term\tparent\tbranch\n")
        for k, term in enumerate(dag.terms):
            if dag.parents[k]:
                for p in sorted(dag.parents[k]):
                    fh.write(f"{term}\t{dag.terms[p]}\t{dag.branches[k]}\n")
            else:
                fh.write(f"{term}\t\t{dag.branches[k]}\n")
    with open(paths["annotations"], "w", encoding="utf-8") as fh:
        fh.write("protein\tterm\n")
        for i, k in instance.table.assignments():
            fh.write(f"{instance.table.proteins[i]}\t{dag.terms[k]}\n")
    return paths
