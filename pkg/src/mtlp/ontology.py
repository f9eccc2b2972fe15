"""Term hierarchies, annotation tables and task selection.

The term DAG carries one branch tag per term (BP, MF or CC) and is validated
to be acyclic with branch-consistent edges.  Annotation tables map proteins
to terms; the true-path closure propagates every annotation to all ancestor
terms, after which term frequencies are monotone along the hierarchy and
information-content measures are well defined.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

BRANCHES = ("BP", "MF", "CC")

_OBO_NAMESPACES = {
    "biological_process": "BP",
    "molecular_function": "MF",
    "cellular_component": "CC",
}


class OntologyDag:
    """Acyclic is-a hierarchy of terms with per-term branch tags."""

    def __init__(self, terms, parents, branches):
        self.terms = list(terms)
        self.parents = [frozenset(p) for p in parents]
        self.branches = list(branches)
        if not (len(self.terms) == len(self.parents) == len(self.branches)):
            raise ValueError("terms, parents and branches must align")
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("duplicate term identifier")
        self._index = {t: i for i, t in enumerate(self.terms)}
        self._anc_cache: dict[int, frozenset] = {}
        n = len(self.terms)
        for k, (ps, br) in enumerate(zip(self.parents, self.branches)):
            if br not in BRANCHES:
                raise ValueError(f"term {self.terms[k]!r}: unknown branch {br!r}")
            for p in ps:
                if not (0 <= p < n):
                    raise ValueError(f"term {self.terms[k]!r}: parent index {p} out of range")
                if self.branches[p] != br:
                    raise ValueError(
                        f"branch mismatch on edge {self.terms[k]!r} -> {self.terms[p]!r}"
                    )
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        state = [0] * len(self.terms)  # 0 new, 1 open, 2 done
        for start in range(len(self.terms)):
            if state[start]:
                continue
            stack = [(start, iter(self.parents[start]))]
            state[start] = 1
            while stack:
                node, it = stack[-1]
                advanced = False
                for p in it:
                    if state[p] == 1:
                        raise ValueError(f"cycle through term {self.terms[p]!r}")
                    if state[p] == 0:
                        state[p] = 1
                        stack.append((p, iter(self.parents[p])))
                        advanced = True
                        break
                if not advanced:
                    state[node] = 2
                    stack.pop()

    def __len__(self) -> int:
        return len(self.terms)

    def index(self, term: str) -> int:
        return self._index[term]

    def ancestors(self, k: int) -> frozenset:
        """Proper ancestors of term ``k`` (k itself excluded)."""
        cached = self._anc_cache.get(k)
        if cached is not None:
            return cached
        out = set()
        stack = list(self.parents[k])
        while stack:
            p = stack.pop()
            if p not in out:
                out.add(p)
                stack.extend(self.parents[p])
        result = frozenset(out)
        self._anc_cache[k] = result
        return result

    def roots(self) -> list[int]:
        return [k for k, ps in enumerate(self.parents) if not ps]


class AnnotationTable:
    """Protein-to-term assignments over a fixed protein list."""

    def __init__(self, proteins, terms_per_protein, n_terms: int, closed: bool = False):
        self.proteins = list(proteins)
        if len(set(self.proteins)) != len(self.proteins):
            raise ValueError("duplicate protein name")
        self.terms_per_protein = [frozenset(s) for s in terms_per_protein]
        if len(self.terms_per_protein) != len(self.proteins):
            raise ValueError("protein list and assignment list must align")
        self.n_terms = int(n_terms)
        for i, s in enumerate(self.terms_per_protein):
            for k in s:
                if not (0 <= k < self.n_terms):
                    raise ValueError(f"protein {self.proteins[i]!r}: term index {k} out of range")
        self.closed = closed
        self._index = {p: i for i, p in enumerate(self.proteins)}
        self._positives: dict[int, frozenset] | None = None

    def __len__(self) -> int:
        return len(self.proteins)

    def protein_index(self, name: str) -> int:
        return self._index[name]

    def positives(self, k: int) -> frozenset:
        """Protein indices assigned to term ``k``."""
        if self._positives is None:
            buckets: dict[int, set] = {}
            for i, s in enumerate(self.terms_per_protein):
                for t in s:
                    buckets.setdefault(t, set()).add(i)
            self._positives = {t: frozenset(v) for t, v in buckets.items()}
        return self._positives.get(k, frozenset())

    def annotated_count(self) -> int:
        """Number of proteins carrying at least one assignment."""
        return sum(1 for s in self.terms_per_protein if s)

    def assignments(self):
        """All (protein index, term index) pairs, in deterministic order."""
        for i, s in enumerate(self.terms_per_protein):
            for k in sorted(s):
                yield (i, k)

    def project(self, universe) -> "AnnotationTable":
        """Re-index onto an explicit protein universe.

        Annotated proteins absent from the universe are dropped (count
        logged); universe proteins without annotations get empty rows.
        """
        universe = list(universe)
        sets = [frozenset()] * len(universe)
        hit = 0
        for u, name in enumerate(universe):
            i = self._index.get(name)
            if i is not None:
                sets[u] = self.terms_per_protein[i]
                hit += 1
        dropped = len(self.proteins) - hit
        if dropped:
            logger.info("projection dropped %d annotated protein(s) absent from universe", dropped)
        return AnnotationTable(universe, sets, self.n_terms, closed=self.closed)


def true_path_closure(a: AnnotationTable, d: OntologyDag) -> AnnotationTable:
    """Propagate every assignment to all ancestor terms (idempotent)."""
    if a.n_terms != len(d):
        raise ValueError("annotation table and DAG disagree on term count")
    closed_sets = []
    for s in a.terms_per_protein:
        out = set(s)
        for k in s:
            out |= d.ancestors(k)
        closed_sets.append(frozenset(out))
    return AnnotationTable(a.proteins, closed_sets, a.n_terms, closed=True)


def term_frequency(a: AnnotationTable, k: int, corpus_size: int | None = None) -> float:
    """Fraction of corpus proteins positive for term ``k``.

    The corpus defaults to all annotated proteins in the table.  Terms with
    zero positives have no information content and are rejected.
    """
    if not a.closed:
        raise ValueError("term frequency requires a closed annotation table")
    if corpus_size is None:
        corpus_size = a.annotated_count()
    if corpus_size <= 0:
        raise ValueError("empty corpus")
    npos = len(a.positives(k))
    if npos == 0:
        raise ValueError(f"undefined information content: term index {k} has no positives")
    return npos / corpus_size


def branch_corpus_sizes(a: AnnotationTable, d: OntologyDag) -> dict[str, int]:
    """Per-branch count of proteins with at least one annotation in the branch."""
    counts = {br: 0 for br in BRANCHES}
    for s in a.terms_per_protein:
        seen = {d.branches[k] for k in s}
        for br in seen:
            counts[br] += 1
    return counts


def min_frequency_common_ancestor(
    d: OntologyDag, a: AnnotationTable, k: int, r: int, corpus_size: int | None = None
) -> int:
    """Common ancestor of ``k`` and ``r`` with minimum positive frequency.

    Ancestor sets are reflexive here (a term is its own ancestor), so the
    result is defined whenever the two terms share any root.  Frequency ties
    break toward the smaller term index.
    """
    if d.branches[k] != d.branches[r]:
        raise ValueError("terms belong to different branches")
    common = (d.ancestors(k) | {k}) & (d.ancestors(r) | {r})
    if not common:
        raise ValueError("disjoint hierarchy roots: no common ancestor")
    return min(common, key=lambda t: (term_frequency(a, t, corpus_size), t))


@dataclass(frozen=True)
class TaskSet:
    """Selected prediction tasks with their positive counts and group tag."""

    terms: tuple
    positive_counts: tuple
    group: str

    def __post_init__(self):
        if len(self.terms) != len(self.positive_counts):
            raise ValueError("terms and positive counts must align")

    def __len__(self) -> int:
        return len(self.terms)


def select_tasks(
    a: AnnotationTable,
    d: OntologyDag,
    min_pos: int = 5,
    max_pos: int = 100,
    grouping: str = "branch",
    size_split: int = 20,
) -> list[TaskSet]:
    """Pick terms whose positive count falls in [min_pos, max_pos] and group them.

    ``grouping="branch"`` yields at most one TaskSet per branch;
    ``"branch-size"`` additionally splits each branch at ``size_split``
    positives (a term with exactly ``size_split`` falls in the small bin).
    """
    if min_pos < 1:
        raise ValueError("min_pos must be >= 1")
    if grouping not in ("branch", "branch-size"):
        raise ValueError(f"unknown grouping {grouping!r}")
    if not a.closed:
        raise ValueError("task selection requires a closed annotation table")
    buckets: dict[str, list[tuple[int, int]]] = {}
    for k in range(len(d)):
        npos = len(a.positives(k))
        if not (min_pos <= npos <= max_pos):
            continue
        br = d.branches[k]
        if grouping == "branch":
            tag = br
        else:
            tag = (
                f"{br}:{min_pos}-{size_split}"
                if npos <= size_split
                else f"{br}:{size_split + 1}-{max_pos}"
            )
        buckets.setdefault(tag, []).append((k, npos))
    if not buckets:
        logger.warning("task selection is empty for range [%d, %d]", min_pos, max_pos)
        return []
    out = []
    for tag in sorted(buckets):
        pairs = sorted(buckets[tag])
        out.append(
            TaskSet(
                terms=tuple(k for k, _ in pairs),
                positive_counts=tuple(c for _, c in pairs),
                group=tag,
            )
        )
    return out


def build_label_matrix(a: AnnotationTable, ts: TaskSet, protein_universe) -> np.ndarray:
    """Dense sign label matrix: +1 where the universe protein has the task's term.

    Rows follow ``protein_universe`` order; annotated proteins missing from
    the universe are ignored (count logged once by :meth:`AnnotationTable.project`
    when used; here a local count is logged).
    """
    universe = list(protein_universe)
    uindex = {p: i for i, p in enumerate(universe)}
    Y = -np.ones((len(universe), len(ts)), dtype=np.float64)
    missing = set()
    for j, k in enumerate(ts.terms):
        for i in a.positives(k):
            u = uindex.get(a.proteins[i])
            if u is None:
                missing.add(a.proteins[i])
            else:
                Y[u, j] = 1.0
    if missing:
        logger.info("label matrix dropped %d protein(s) absent from universe", len(missing))
    return Y


def read_ontology_tsv(path) -> OntologyDag:
    """Read ``term<TAB>parent<TAB>branch`` rows; roots appear with empty parent."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            rows.append((parts[0], parts[1], parts[2]))
    if rows and rows[0] == ("term", "parent", "branch"):
        rows = rows[1:]
    terms = sorted({t for t, _, _ in rows})
    index = {t: i for i, t in enumerate(terms)}
    parents = [set() for _ in terms]
    branches = [None] * len(terms)
    for term, parent, branch in rows:
        k = index[term]
        if branches[k] is not None and branches[k] != branch:
            raise ValueError(f"{path}: conflicting branch for term {term!r}")
        branches[k] = branch
        if parent:
            if parent not in index:
                raise ValueError(f"{path}: parent term {parent!r} never defined")
            parents[k].add(index[parent])
    return OntologyDag(terms, parents, branches)


def read_obo(path, include_part_of: bool = False) -> OntologyDag:
    """Map OBO term stanzas (id / is_a / namespace) onto the DAG model.

    ``part_of`` relationships count as parents only when requested.
    Obsolete terms and terms in unknown namespaces are skipped.
    """
    stanzas = []
    current = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line == "[Term]":
                current = {"id": None, "parents": [], "namespace": None, "obsolete": False}
                stanzas.append(current)
            elif line.startswith("[") and line.endswith("]"):
                current = None
            elif current is not None:
                if line.startswith("id: "):
                    current["id"] = line[4:].strip()
                elif line.startswith("is_a: "):
                    current["parents"].append(line[6:].split("!")[0].strip())
                elif include_part_of and line.startswith("relationship: part_of "):
                    current["parents"].append(
                        line[len("relationship: part_of "):].split("!")[0].strip()
                    )
                elif line.startswith("namespace: "):
                    current["namespace"] = line[len("namespace: "):].strip()
                elif line == "is_obsolete: true":
                    current["obsolete"] = True
    kept = {
        s["id"]: s
        for s in stanzas
        if s["id"] and not s["obsolete"] and s["namespace"] in _OBO_NAMESPACES
    }
    terms = sorted(kept)
    index = {t: i for i, t in enumerate(terms)}
    parents = []
    branches = []
    for t in terms:
        s = kept[t]
        parents.append({index[p] for p in s["parents"] if p in index})
        branches.append(_OBO_NAMESPACES[s["namespace"]])
    return OntologyDag(terms, parents, branches)


def read_annotations_tsv(path, d: OntologyDag) -> AnnotationTable:
    """Read ``protein<TAB>term`` rows into an (unclosed) annotation table."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
            pairs.append((parts[0], parts[1]))
    if pairs and pairs[0] == ("protein", "term"):
        pairs = pairs[1:]
    proteins = sorted({p for p, _ in pairs})
    pindex = {p: i for i, p in enumerate(proteins)}
    sets = [set() for _ in proteins]
    for protein, term in pairs:
        try:
            k = d.index(term)
        except KeyError:
            raise ValueError(f"{path}: annotation references unknown term {term!r}")
        sets[pindex[protein]].add(k)
    return AnnotationTable(proteins, sets, len(d), closed=False)
