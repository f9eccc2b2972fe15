"""Ranking metrics, protein-centric F-measure and the cross-validation harness.

AUPRC is the non-interpolated average-precision estimator with tied scores
collapsed into single threshold steps.  Fmax sweeps the distinct score
values of the score matrix, averaging per-protein precision and recall at
each threshold; both metrics are invariant under strictly increasing score
transformations.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .config import STAGE_FOLDS, ExperimentConfig, derive_rng
from .ontology import build_label_matrix, select_tasks
from .propagation import Partition, baseline_gba, baseline_knn, baseline_random_walk, propagate_all_tasks
from .relatedness import build_map, build_task_matrix, random_task_matrix

logger = logging.getLogger(__name__)


def auprc(scores, labels) -> float:
    """Area under the precision-recall step curve (average precision).

    Scores are sorted descending, ties grouped into one threshold step, and
    precision accumulated at every recall increment.  Needs both classes.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be aligned vectors")
    pos = y > 0
    npos = int(pos.sum())
    nneg = s.size - npos
    if npos == 0 or nneg == 0:
        raise ValueError("AUPRC undefined: labels contain a single class")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    pos_sorted = pos[order].astype(np.float64)
    # group boundaries: last index of each tied block
    boundary = np.nonzero(np.diff(s_sorted))[0]
    ends = np.concatenate([boundary, [s.size - 1]])
    tp = np.cumsum(pos_sorted)[ends]
    predicted = ends + 1.0
    precision = tp / predicted
    recall = tp / npos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.dot(recall - prev_recall, precision))


def fmax(F, Y, cafa_precision: bool = False) -> tuple[float, float]:
    """Maximum protein-averaged multilabel F-score over all score thresholds.

    Proteins without any positive label are excluded from the averages (their
    recall is undefined).  At each threshold a protein predicting nothing
    contributes precision 0, unless ``cafa_precision`` restricts the
    precision average to proteins with at least one prediction.  Returns the
    best F and the smallest threshold attaining it.
    """
    F = np.asarray(F, dtype=np.float64)
    Y = np.asarray(Y)
    if F.shape != Y.shape or F.ndim != 2:
        raise ValueError("score and label matrices must have the same 2-D shape")
    pos = Y > 0
    included = pos.any(axis=1)
    if not included.any():
        raise ValueError("no evaluable protein: every row lacks positive labels")
    Fi = F[included]
    Pi = pos[included]
    n_inc, m = Fi.shape
    pos_count = Pi.sum(axis=1).astype(np.float64)

    thresholds = np.unique(F)  # ascending; includes excluded rows' values
    # entries sorted by score descending; consumed as the threshold drops
    flat_order = np.argsort(-Fi, axis=None, kind="stable")
    rows = flat_order // m
    vals = Fi.ravel()[flat_order]
    is_pos = Pi.ravel()[flat_order].astype(np.float64)

    tp = np.zeros(n_inc)
    pred = np.zeros(n_inc)
    best_f = -1.0
    best_t = thresholds[-1]
    ptr = 0
    total = vals.size
    for t in thresholds[::-1]:
        while ptr < total and vals[ptr] >= t:
            r = rows[ptr]
            pred[r] += 1.0
            tp[r] += is_pos[ptr]
            ptr += 1
        predicting = pred > 0
        prec_terms = np.zeros(n_inc)
        np.divide(tp, pred, out=prec_terms, where=predicting)
        if cafa_precision:
            k = int(predicting.sum())
            prec = float(prec_terms.sum() / k) if k else 0.0
        else:
            prec = float(prec_terms.mean())
        rec = float((tp / pos_count).mean())
        f = 2.0 * prec * rec / (prec + rec) if (prec + rec) > 0 else 0.0
        if f >= best_f:  # descending sweep: later t is smaller, wins ties
            best_f = f
            best_t = float(t)
    return best_f, best_t


@dataclass(frozen=True)
class FoldAssignment:
    """Balanced random partition of n items into k folds."""

    n: int
    k: int
    fold: np.ndarray
    seed: int

    def test_indices(self, f: int) -> np.ndarray:
        return np.nonzero(self.fold == f)[0]

    def train_indices(self, f: int) -> np.ndarray:
        return np.nonzero(self.fold != f)[0]


def kfold_split(n: int, k: int, seed: int) -> FoldAssignment:
    """Seeded shuffle into k folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    if n < k:
        raise ValueError(f"cannot split {n} items into {k} folds")
    rng = derive_rng(seed, STAGE_FOLDS)
    perm = rng.permutation(n)
    fold = np.empty(n, dtype=np.int64)
    base, extra = divmod(n, k)
    start = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        fold[perm[start:start + size]] = f
        start += size
    return FoldAssignment(n, k, fold, seed)


@dataclass
class MetricsReport:
    """Aggregated run output; serializes to a stable JSON document."""

    manifest: dict
    per_task: list
    groups: dict
    fmax: dict
    skipped: dict
    # carried alongside for score export; not part of the JSON document
    scores: np.ndarray | None = field(default=None, repr=False, compare=False)
    score_terms: list | None = field(default=None, repr=False, compare=False)
    protein_names: list | None = field(default=None, repr=False, compare=False)
    fold_of_protein: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_document(self) -> dict:
        doc = {
            "manifest": self.manifest,
            "per_task": self.per_task,
            "groups": self.groups,
            "fmax": self.fmax,
            "skipped": self.skipped,
        }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_document(), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        payload = self.to_json().encode("utf-8")
        directory = os.path.dirname(os.fspath(path)) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path) -> "MetricsReport":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(
            manifest=doc["manifest"],
            per_task=doc["per_task"],
            groups=doc["groups"],
            fmax=doc["fmax"],
            skipped=doc["skipped"],
        )


@dataclass
class _TaskPlan:
    """Per-group labels and operators, fixed once per run."""

    tasksets: list
    label_matrices: list  # one n-by-m_g matrix per group
    maps: list  # MultitaskMap or None per group
    terms: list  # flattened term names
    npos: list  # flattened positive counts


def _build_plan(data, config: ExperimentConfig) -> _TaskPlan:
    table_graph = data.table.project(data.names)
    tasksets = select_tasks(
        table_graph,
        data.dag,
        min_pos=config.min_pos,
        max_pos=config.max_pos,
        grouping=config.grouping,
        size_split=config.size_split,
    )
    label_matrices, maps, terms, npos = [], [], [], []
    for group_idx, ts in enumerate(tasksets):
        label_matrices.append(build_label_matrix(table_graph, ts, data.names))
        mmap = None
        if config.method in ("mtlp", "mtlp-inv"):
            if config.measure == "random":
                tm = random_task_matrix(
                    len(ts), config.density, config.tau, config.seed, stream=group_idx
                )
            else:
                tm = build_task_matrix(ts, config.measure, dag=data.dag, table=data.table)
            mmap = build_map(tm, config.gamma, config.p)
        maps.append(mmap)
        terms.extend(data.dag.terms[k] for k in ts.terms)
        npos.extend(ts.positive_counts)
    return _TaskPlan(tasksets, label_matrices, maps, terms, npos)


def _score_fold(g, data, part, Y_group, mmap, config):
    """Scores on the test block for one fold and one task group."""
    method = config.method
    label_mode = config.resolved_label_mode()
    failures: dict[int, str] = {}
    if method in ("lp", "mtlp", "mtlp-inv"):
        F_U, failures = propagate_all_tasks(
            g,
            part,
            Y_group[part.train],
            label_mode=label_mode,
            rtol=config.solver_rtol,
            workers=config.workers,
        )
        if mmap is not None:
            F_U = F_U @ mmap.operator
        return F_U, failures
    m = Y_group.shape[1]
    F_U = np.zeros((part.test.size, m), dtype=np.float64)
    for k in range(m):
        y_S = Y_group[part.train, k]
        try:
            if method == "gba":
                F_U[:, k] = baseline_gba(g, part, y_S)
            elif method == "rw":
                F_U[:, k] = baseline_random_walk(g, part, y_S, steps=config.rw_steps)
            else:
                F_U[:, k] = baseline_knn(data.collection, part, y_S, k=config.knn_k)
        except ValueError as exc:
            failures[k] = str(exc)
            logger.warning("task column %d skipped: %s", k, exc)
    return F_U, failures


def _failure_kind(message: str) -> str:
    if message.startswith("degenerate fold") or message.startswith("empty seed set"):
        return "degenerate_fold"
    return "solver_failure"


def score_split(data, config: ExperimentConfig, part: Partition):
    """Score one train/test split with the configured method.

    Returns (scores over the test block, flattened term names, failures by
    flattened column index).
    """
    config.validate()
    plan = _build_plan(data, config)
    blocks = []
    failure_by_task: dict[int, str] = {}
    offset = 0
    for ts, Y_g, mmap in zip(plan.tasksets, plan.label_matrices, plan.maps):
        F_U, failures = _score_fold(data.graph, data, part, Y_g, mmap, config)
        blocks.append(F_U)
        for col, msg in failures.items():
            failure_by_task[offset + col] = msg
        offset += len(ts)
    scores = np.hstack(blocks) if blocks else np.zeros((part.test.size, 0))
    return scores, plan.terms, failure_by_task


def run_cross_validation(data, config: ExperimentConfig) -> MetricsReport:
    """K-fold out-of-fold scoring of every selected task, then metrics.

    ``data`` carries the integrated graph, its vertex names, the term DAG,
    the closed annotation table over the full corpus, and (for the per-network
    baseline) the network collection.  One fold split is shared by all tasks
    so the multitask operator always sees consistent training labels.
    """
    config.validate()
    g = data.graph
    names = data.names
    n = len(names)
    plan = _build_plan(data, config)
    folds = kfold_split(n, config.folds, config.seed)

    columns: list[np.ndarray] = []
    labels_cols: list[np.ndarray] = []
    failure_by_task: dict[int, str] = {}
    offset = 0
    for ts, Y_g, mmap in zip(plan.tasksets, plan.label_matrices, plan.maps):
        scores_g = np.zeros((n, len(ts)), dtype=np.float64)
        for f in range(config.folds):
            part = Partition(folds.train_indices(f), folds.test_indices(f))
            F_U, failures = _score_fold(g, data, part, Y_g, mmap, config)
            scores_g[part.test] = F_U
            for col, msg in failures.items():
                failure_by_task.setdefault(offset + col, msg)
        for j in range(len(ts)):
            columns.append(scores_g[:, j])
            labels_cols.append(Y_g[:, j])
        offset += len(ts)

    all_terms = plan.terms
    all_npos = plan.npos
    m_total = len(all_terms)
    scores = np.column_stack(columns) if m_total else np.zeros((n, 0))
    labels = np.column_stack(labels_cols) if m_total else np.zeros((n, 0))

    skipped_counts = {"degenerate_fold": 0, "solver_failure": 0, "single_class": 0}
    kept: list[int] = []
    per_task = []
    for j in range(m_total):
        if j in failure_by_task:
            skipped_counts[_failure_kind(failure_by_task[j])] += 1
            continue
        col_labels = labels[:, j]
        single_class_fold = False
        for f in range(config.folds):
            test_labels = col_labels[folds.fold == f]
            if (test_labels > 0).all() or (test_labels < 0).all():
                single_class_fold = True
                break
        if single_class_fold or (col_labels > 0).all() or (col_labels < 0).all():
            skipped_counts["single_class"] += 1
            continue
        kept.append(j)
        per_task.append(
            {
                "term": all_terms[j],
                "auprc": auprc(scores[:, j], col_labels),
                "n_pos": all_npos[j],
            }
        )

    def _mean(entries):
        return float(np.mean([e["auprc"] for e in entries])) if entries else None

    small = [e for e in per_task if e["n_pos"] <= config.size_split]
    large = [e for e in per_task if e["n_pos"] > config.size_split]
    groups = {"all": _mean(per_task), "small": _mean(small), "large": _mean(large)}

    fmax_entry = {"value": None, "threshold": None}
    fmax_cafa_entry = None
    if kept:
        F_keep = scores[:, kept]
        Y_keep = labels[:, kept]
        if (Y_keep > 0).any():
            value, threshold = fmax(F_keep, Y_keep)
            fmax_entry = {"value": value, "threshold": threshold}
            if config.fmax_cafa:
                cv, ct = fmax(F_keep, Y_keep, cafa_precision=True)
                fmax_cafa_entry = {"value": cv, "threshold": ct}

    manifest = config.manifest()
    manifest["n_vertices"] = n
    manifest["n_tasks"] = m_total
    manifest["task_groups"] = [{"group": ts.group, "size": len(ts)} for ts in plan.tasksets]
    report = MetricsReport(
        manifest=manifest,
        per_task=per_task,
        groups=groups,
        fmax=fmax_entry,
        skipped=skipped_counts,
        scores=scores,
        score_terms=all_terms,
        protein_names=list(names),
        fold_of_protein=folds.fold,
    )
    if fmax_cafa_entry is not None:
        report.fmax["cafa"] = fmax_cafa_entry
    return report
