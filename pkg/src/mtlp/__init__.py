"""Graph-based label propagation with multitask extensions.

The package predicts binary labels on the vertices of a weighted undirected
graph.  Scores are computed by the harmonic label propagation solver and can
be post-multiplied by a task-interaction operator that couples the columns of
the score matrix: a dissimilarity operator pushes rare positive labels apart
from the bulk of negatives, an inverse similarity operator pulls related
tasks together.  Task relatedness comes from an ontology over the tasks
(information-content measures) or directly from shared positive instances.

Submodules
----------
graph        sparse symmetric graphs, normalization, network integration
ontology     term DAG, annotation closure, task selection, label matrices
relatedness  task similarity/dissimilarity measures and operators
propagation  harmonic solver, multitask scoring, baseline predictors
evaluation   AUPRC, Fmax, cross-validation harness
synthetic    seeded generator for desk-scale benchmark instances
cli          command-line entry points
"""

__version__ = "0.1.0"

from .graph import (
    NetworkCollection,
    SparseGraph,
    integrate_networks,
    laplacian_quadratic,
    normalize_symmetric,
    read_network_tsv,
    write_network_tsv,
)
from .ontology import (
    AnnotationTable,
    OntologyDag,
    TaskSet,
    build_label_matrix,
    min_frequency_common_ancestor,
    read_annotations_tsv,
    read_obo,
    read_ontology_tsv,
    select_tasks,
    term_frequency,
    true_path_closure,
)
from .relatedness import (
    MultitaskMap,
    TaskMatrix,
    apply_map_closed_form,
    build_map,
    build_task_matrix,
    diss0,
    load_task_matrix,
    random_task_matrix,
    save_task_matrix,
    sim_ic_jaccard,
    sim_jiang,
    sim_lin,
)
from .propagation import (
    ConvergenceError,
    DegenerateFoldError,
    Partition,
    baseline_gba,
    baseline_knn,
    baseline_random_walk,
    mtlp,
    mtlp_inv,
    normalize_training_labels,
    propagate_all_tasks,
    solve_lp,
)
from .evaluation import (
    FoldAssignment,
    MetricsReport,
    auprc,
    fmax,
    kfold_split,
    run_cross_validation,
)
from .config import ExperimentConfig
from .synthetic import SyntheticInstance, SyntheticSpec, generate_synthetic
from .experiments import ExperimentData, load_experiment_data, run_experiment
