"""Command-line surface: integrate, taskmat, propagate, cv, synth, report.

Every file is written atomically (temp file in the target directory, then
rename) and every data-producing command leaves a manifest from which the
run can be re-executed bit for bit.  All manifests are timestamp-free so
identical configurations produce identical bytes.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .config import RNG_ID, ExperimentConfig, parse_config_file
from .evaluation import MetricsReport, kfold_split, run_cross_validation, score_split
from .experiments import (
    build_collection,
    load_experiment_data,
    parse_synthetic_spec,
)
from .graph import integrate_networks, normalize_symmetric, write_network_tsv
from .ontology import (
    read_annotations_tsv,
    read_obo,
    read_ontology_tsv,
    select_tasks,
    true_path_closure,
)
from .propagation import ConvergenceError, Partition
from .relatedness import build_task_matrix, random_task_matrix, save_task_matrix
from .synthetic import generate_synthetic, write_instance

logger = logging.getLogger(__name__)


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temp path in the target directory; rename into place on success."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_text(path, content: str) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(content)


def _manifest_text(entries: dict) -> str:
    lines = [f"{key}: {entries[key]}" for key in entries]
    return "\n".join(lines) + "\n"


def _config_from_args(args) -> ExperimentConfig:
    """Merge builtin defaults, config-file values and explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for key in (
        "method", "measure", "seed", "gamma", "p", "folds", "grouping", "size_split",
        "min_pos", "max_pos", "label_mode", "graph", "ontology", "annotations",
        "synthetic", "obo", "part_of", "renormalize", "density", "tau", "rw_steps",
        "knn_k", "solver_rtol", "fmax_cafa", "output_dir", "workers",
    ):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    networks = getattr(args, "network", None)
    if networks:
        values["networks"] = tuple(networks)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override its values")
    p.add_argument("--network", action="append", metavar="TSV",
                   help="raw network file (repeatable); each is normalized before the sum")
    p.add_argument("--graph", metavar="TSV", help="pre-integrated network file, ingested as-is")
    p.add_argument("--ontology", metavar="FILE", help="term hierarchy (TSV, or OBO with --obo)")
    p.add_argument("--annotations", metavar="TSV", help="protein\\tterm assignment file")
    p.add_argument("--synthetic", metavar="SPEC",
                   help="inline generator spec, e.g. n=300,m=12,seed=1")
    p.add_argument("--obo", action="store_true", default=None, help="read the ontology as OBO")
    p.add_argument("--part-of", dest="part_of", action="store_true", default=None,
                   help="treat part_of relations as parents (OBO only)")
    p.add_argument("--method", choices=["lp", "mtlp", "mtlp-inv", "gba", "rw", "knn"])
    p.add_argument("--measure", choices=["diss0", "sim1", "sim2", "sim3", "diss3", "random"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--grouping", choices=["branch", "branch-size"])
    p.add_argument("--size-split", dest="size_split", type=int)
    p.add_argument("--min-pos", dest="min_pos", type=int)
    p.add_argument("--max-pos", dest="max_pos", type=int)
    p.add_argument("--label-mode", dest="label_mode", choices=["raw", "class-normalized"])
    p.add_argument("--renormalize", action="store_true", default=None,
                   help="re-normalize the integrated graph (sensitivity check)")
    p.add_argument("--density", type=float, help="nonzero fraction for measure=random")
    p.add_argument("--tau", type=float, help="weight upper bound for measure=random")
    p.add_argument("--rw-steps", dest="rw_steps", type=int)
    p.add_argument("--knn-k", dest="knn_k", type=int)
    p.add_argument("--solver-rtol", dest="solver_rtol", type=float)
    p.add_argument("--fmax-cafa", dest="fmax_cafa", action="store_true", default=None,
                   help="also report Fmax with precision averaged over predicting proteins")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--workers", type=int, default=None,
                   help="worker pool size (default: logical cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtlp",
        description="Label propagation with multitask extensions over protein networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("integrate", help="normalize networks and sum them on the name union")
    p.add_argument("--network", action="append", required=True, metavar="TSV")
    p.add_argument("--output", required=True, metavar="TSV")
    p.add_argument("--renormalize", action="store_true",
                   help="normalize the integrated graph again")

    p = sub.add_parser("taskmat", help="build task interaction matrices per group")
    p.add_argument("--ontology", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--obo", action="store_true")
    p.add_argument("--part-of", dest="part_of", action="store_true")
    p.add_argument("--measure", required=True,
                   choices=["diss0", "sim1", "sim2", "sim3", "diss3", "random"])
    p.add_argument("--min-pos", dest="min_pos", type=int, default=5)
    p.add_argument("--max-pos", dest="max_pos", type=int, default=100)
    p.add_argument("--grouping", choices=["branch", "branch-size"], default="branch")
    p.add_argument("--size-split", dest="size_split", type=int, default=20)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", dest="output_dir", default=".")

    p = sub.add_parser("propagate", help="score one train/test split and write a score table")
    _add_experiment_flags(p)
    p.add_argument("--test-file", dest="test_file",
                   help="file listing test protein names, one per line")
    p.add_argument("--holdout", type=float,
                   help="test fraction drawn with the run seed (alternative to --test-file)")

    p = sub.add_parser("cv", help="k-fold cross-validation producing a JSON metrics report")
    _add_experiment_flags(p)
    p.add_argument("--write-scores", dest="write_scores", action="store_true",
                   help="also write the out-of-fold score table")
    p.add_argument("--gamma-sweep", dest="gamma_sweep", metavar="START:STOP:STEP",
                   help="run once per gamma value in the inclusive range")
    p.add_argument("--p-sweep", dest="p_sweep", metavar="P1,P2,...",
                   help="run once per operator power")

    p = sub.add_parser("synth", help="generate a synthetic benchmark instance")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--m", type=int, default=12)
    p.add_argument("--branching", type=int, default=3)
    p.add_argument("--rates", default="0.3:0.12:0.05",
                   help="colon-separated positive rate per tree depth")
    p.add_argument("--intra-edge-prob", dest="intra_edge_prob", type=float, default=0.35)
    p.add_argument("--intra-weight", dest="intra_weight", type=float, default=1.0)
    p.add_argument("--background-edge-prob", dest="background_edge_prob", type=float,
                   default=0.02)
    p.add_argument("--background-weight", dest="background_weight", type=float, default=0.5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output-dir", dest="output_dir", default=".")

    p = sub.add_parser("report", help="summarize a JSON metrics report")
    p.add_argument("--input", required=True)
    p.add_argument("--tsv", help="write per-task metrics to this TSV file")

    return parser


def _cmd_integrate(args) -> int:
    collection = build_collection(args.network, normalize=True)
    g = integrate_networks(collection)
    if args.renormalize:
        g = normalize_symmetric(g)
    with atomic_path(args.output) as tmp:
        write_network_tsv(tmp, g, collection.union_vertices)
    _write_text(
        args.output + ".manifest.txt",
        _manifest_text(
            {
                "command": "integrate",
                "package_version": __version__,
                "networks": ",".join(args.network),
                "renormalize": args.renormalize,
                "n_vertices": g.n,
                "n_edges": g.num_edges,
            }
        ),
    )
    print(f"integrate: {len(collection)} network(s) -> {args.output} "
          f"({g.n} vertices, {g.num_edges} edges)")
    return 0


def _cmd_taskmat(args) -> int:
    if args.obo:
        dag = read_obo(args.ontology, include_part_of=args.part_of)
    else:
        dag = read_ontology_tsv(args.ontology)
    table = true_path_closure(read_annotations_tsv(args.annotations, dag), dag)
    tasksets = select_tasks(
        table, dag,
        min_pos=args.min_pos, max_pos=args.max_pos,
        grouping=args.grouping, size_split=args.size_split,
    )
    if not tasksets:
        print("taskmat: no tasks selected")
        return 0
    os.makedirs(args.output_dir, exist_ok=True)
    written = []
    for idx, ts in enumerate(tasksets):
        if args.measure == "random":
            tm = random_task_matrix(len(ts), args.density, args.tau, args.seed, stream=idx)
        else:
            tm = build_task_matrix(ts, args.measure, dag=dag, table=table)
        safe_tag = ts.group.replace(":", "_")
        out = os.path.join(args.output_dir, f"taskmat_{safe_tag}.tsv")
        with atomic_path(out) as tmp:
            save_task_matrix(tmp, tm)
        written.append(out)
    print(f"taskmat: measure={args.measure} wrote {len(written)} file(s): "
          + ", ".join(written))
    return 0


def _score_table_lines(report: MetricsReport):
    yield "protein\tterm\tscore\tfold\n"
    fold = report.fold_of_protein
    for j, term in enumerate(report.score_terms):
        col = report.scores[:, j]
        for i, name in enumerate(report.protein_names):
            yield f"{name}\t{term}\t{col[i]!r}\t{int(fold[i])}\n"


def _scores_manifest(config: ExperimentConfig) -> str:
    man = config.manifest()
    flat = {
        "command": "scores",
        "package_version": man["package_version"],
        "rng": man["rng"],
        "method": man["method"],
        "measure": man["measure"],
        "gamma": man["gamma"],
        "p": man["p"],
        "seed": man["seed"],
        "grouping": man["grouping"],
        "solver_rtol": man["solver_rtol"],
        "label_mode": man["label_mode"],
        "inputs": json.dumps(man["inputs"], sort_keys=True),
    }
    return _manifest_text(flat)


def _cmd_propagate(args) -> int:
    cfg = _config_from_args(args)
    data = load_experiment_data(cfg)
    n = len(data.names)
    if args.test_file:
        with open(args.test_file, "r", encoding="utf-8") as fh:
            wanted = {line.strip() for line in fh if line.strip()}
        index = {p: i for i, p in enumerate(data.names)}
        missing = sorted(w for w in wanted if w not in index)
        if missing:
            raise ValueError(f"test proteins absent from the graph: {', '.join(missing[:5])}")
        test = np.array(sorted(index[w] for w in wanted), dtype=np.int64)
    elif args.holdout:
        if not (0 < args.holdout < 1):
            raise ValueError("holdout fraction must lie in (0, 1)")
        k = max(2, round(1.0 / args.holdout))
        test = kfold_split(n, k, cfg.seed).test_indices(0)
    else:
        raise ValueError("propagate needs --test-file or --holdout")
    train = np.setdiff1d(np.arange(n, dtype=np.int64), test)
    part = Partition(train, test)
    scores, terms, failures = score_split(data, cfg, part)
    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, "scores.tsv")
    with atomic_path(out) as tmp:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("protein\tterm\tscore\tfold\n")
            for j, term in enumerate(terms):
                for row, i in enumerate(test):
                    fh.write(f"{data.names[i]}\t{term}\t{scores[row, j]!r}\t0\n")
    _write_text(os.path.join(cfg.output_dir, "scores.manifest.txt"), _scores_manifest(cfg))
    if failures:
        logger.warning("%d task column(s) failed and scored 0", len(failures))
    print(f"propagate: scored {test.size} test protein(s) over {len(terms)} task(s) -> {out}")
    return 0


def _sweep_values(spec: str):
    start, stop, step = (float(x) for x in spec.split(":"))
    if step <= 0:
        raise ValueError("sweep step must be positive")
    values = []
    v = start
    while v <= stop + 1e-9:
        values.append(round(v, 10))
        v += step
    return values


def _cmd_cv(args) -> int:
    cfg = _config_from_args(args)
    os.makedirs(cfg.output_dir, exist_ok=True)
    data = load_experiment_data(cfg)

    runs = [(cfg, "report.json")]
    if args.gamma_sweep:
        runs = [
            (ExperimentConfig(**{**cfg.__dict__, "gamma": v}), f"report_gamma_{v:g}.json")
            for v in _sweep_values(args.gamma_sweep)
        ]
    elif args.p_sweep:
        runs = [
            (ExperimentConfig(**{**cfg.__dict__, "p": float(v)}), f"report_p_{float(v):g}.json")
            for v in args.p_sweep.split(",")
        ]
    last_path = None
    for run_cfg, filename in runs:
        report = run_cross_validation(data, run_cfg)
        path = os.path.join(cfg.output_dir, filename)
        report.save(path)
        last_path = path
        if args.write_scores:
            scores_path = os.path.join(cfg.output_dir, filename.replace(".json", "_scores.tsv"))
            with atomic_path(scores_path) as tmp:
                with open(tmp, "w", encoding="utf-8") as fh:
                    fh.writelines(_score_table_lines(report))
            _write_text(
                os.path.join(cfg.output_dir, filename.replace(".json", "_scores.manifest.txt")),
                _scores_manifest(run_cfg),
            )
        all_mean = report.groups["all"]
        fmax_value = report.fmax["value"]
        print(
            f"cv: method={run_cfg.method} measure={run_cfg.measure} gamma={run_cfg.gamma:g} "
            f"p={run_cfg.p:g} -> {path} "
            f"(all={'n/a' if all_mean is None else f'{all_mean:.4f}'}, "
            f"fmax={'n/a' if fmax_value is None else f'{fmax_value:.4f}'})"
        )
    return 0 if last_path else 1


def _cmd_synth(args) -> int:
    spec = parse_synthetic_spec(
        f"n={args.n},m={args.m},branching={args.branching},rates={args.rates},"
        f"intra_edge_prob={args.intra_edge_prob},intra_weight={args.intra_weight},"
        f"background_edge_prob={args.background_edge_prob},"
        f"background_weight={args.background_weight},seed={args.seed}"
    )
    inst = generate_synthetic(spec)
    paths = write_instance(args.output_dir, inst)
    _write_text(
        os.path.join(args.output_dir, "manifest.txt"),
        _manifest_text(
            {
                "command": "synth",
                "package_version": __version__,
                "rng": RNG_ID,
                "n": spec.n,
                "m": spec.m,
                "branching": spec.branching,
                "rates": ":".join(repr(r) for r in spec.rates),
                "intra_edge_prob": spec.intra_edge_prob,
                "intra_weight": spec.intra_weight,
                "background_edge_prob": spec.background_edge_prob,
                "background_weight": spec.background_weight,
                "seed": spec.seed,
            }
        ),
    )
    print(
        f"synth: n={spec.n} m={spec.m} seed={spec.seed} -> "
        f"{paths['network']}, {paths['ontology']}, {paths['annotations']}"
    )
    return 0


def _cmd_report(args) -> int:
    report = MetricsReport.load(args.input)
    man = report.manifest
    print(f"report: method={man.get('method')} measure={man.get('measure')} "
          f"seed={man.get('seed')} tasks={man.get('n_tasks')}")
    for key in ("all", "small", "large"):
        value = report.groups.get(key)
        print(f"  auprc[{key}] = {'n/a' if value is None else f'{value:.6f}'}")
    fv, ft = report.fmax.get("value"), report.fmax.get("threshold")
    print(f"  fmax = {'n/a' if fv is None else f'{fv:.6f}'}"
          + ("" if ft is None else f" at threshold {ft:.6g}"))
    if any(report.skipped.values()):
        print(f"  skipped: {report.skipped}")
    if args.tsv:
        lines = ["term\tauprc\tn_pos\n"]
        lines += [f"{e['term']}\t{e['auprc']!r}\t{e['n_pos']}\n" for e in report.per_task]
        _write_text(args.tsv, "".join(lines))
        print(f"  per-task table -> {args.tsv}")
    return 0


_COMMANDS = {
    "integrate": _cmd_integrate,
    "taskmat": _cmd_taskmat,
    "propagate": _cmd_propagate,
    "cv": _cmd_cv,
    "synth": _cmd_synth,
    "report": _cmd_report,
}


def cli_run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else
        logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "workers", None) is None and hasattr(args, "workers"):
        args.workers = os.cpu_count() or 1
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_run(sys.argv[1:]))


if __name__ == "__main__":
    main()
