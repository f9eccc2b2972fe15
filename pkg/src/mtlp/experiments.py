"""Assembling experiment inputs and running configured experiments.

The loader turns an :class:`~mtlp.config.ExperimentConfig` into in-memory
inputs: each raw network is degree-normalized and the collection is summed
on the union of vertex names; a pre-integrated graph file is ingested as-is.
The annotation table is closed once here, so downstream code can rely on
frequency monotonicity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from .config import ExperimentConfig
from .evaluation import MetricsReport, run_cross_validation
from .graph import (
    NetworkCollection,
    SparseGraph,
    integrate_networks,
    normalize_symmetric,
    read_network_tsv,
)
from .ontology import (
    AnnotationTable,
    OntologyDag,
    read_annotations_tsv,
    read_obo,
    read_ontology_tsv,
    true_path_closure,
)
from .synthetic import SyntheticSpec, generate_synthetic

logger = logging.getLogger(__name__)


@dataclass
class ExperimentData:
    """In-memory inputs of one run."""

    graph: SparseGraph
    names: list
    dag: OntologyDag
    table: AnnotationTable  # closed, over the full annotated corpus
    collection: NetworkCollection | None = None


def parse_synthetic_spec(text: str) -> SyntheticSpec:
    """Parse an inline ``key=value,key=value`` generator spec.

    ``rates`` takes colon-separated values, e.g. ``rates=0.3:0.12:0.05``.
    """
    kwargs = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise ValueError(f"synthetic spec: expected key=value, got {chunk!r}")
        key, value = (s.strip() for s in chunk.split("=", 1))
        key = key.replace("-", "_")
        if key in ("n", "m", "branching", "seed"):
            kwargs[key] = int(value)
        elif key == "rates":
            kwargs[key] = tuple(float(v) for v in value.split(":"))
        elif key in (
            "intra_edge_prob",
            "intra_weight",
            "background_edge_prob",
            "background_weight",
        ):
            kwargs[key] = float(value)
        else:
            raise ValueError(f"synthetic spec: unknown key {key!r}")
    return SyntheticSpec(**kwargs)


def build_collection(paths, normalize: bool = True) -> NetworkCollection:
    """Load network files into a collection, normalizing each by default."""
    entries = []
    for path in paths:
        g, names = read_network_tsv(path)
        if normalize:
            g = normalize_symmetric(g)
        entries.append((str(path), g, names))
    return NetworkCollection(entries)


def load_experiment_data(config: ExperimentConfig) -> ExperimentData:
    """Resolve the configured inputs (files or synthetic) into memory."""
    if config.synthetic is not None:
        spec = parse_synthetic_spec(config.synthetic)
        if "seed=" not in config.synthetic:
            spec = replace(spec, seed=config.seed)
        inst = generate_synthetic(spec)
        graph = inst.graph
        if config.renormalize:
            graph = normalize_symmetric(graph)
        collection = NetworkCollection([("synthetic", graph, inst.protein_names)])
        return ExperimentData(graph, inst.protein_names, inst.dag, inst.table, collection)

    if config.graph is not None:
        g, names = read_network_tsv(config.graph)
        collection = NetworkCollection([(str(config.graph), g, names)])
        graph = g  # already integrated; not re-normalized
    else:
        if not config.networks:
            raise ValueError("no input graph: give --network, --graph or --synthetic")
        collection = build_collection(config.networks, normalize=True)
        graph = integrate_networks(collection)
        names = collection.union_vertices
    if config.renormalize:
        graph = normalize_symmetric(graph)

    if config.ontology is None or config.annotations is None:
        raise ValueError("ontology and annotation files are required")
    if config.obo:
        dag = read_obo(config.ontology, include_part_of=config.part_of)
    else:
        dag = read_ontology_tsv(config.ontology)
    table = true_path_closure(read_annotations_tsv(config.annotations, dag), dag)
    return ExperimentData(graph, list(names), dag, table, collection)


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Load inputs and run the configured cross-validation."""
    config.validate()
    data = load_experiment_data(config)
    return run_cross_validation(data, config)
