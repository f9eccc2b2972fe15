"""Experiment configuration and the root-seed splitting discipline.

All randomness in a run flows from one root seed.  Each randomized stage
derives its own generator from ``(seed, stage tag)`` so that, for example,
the fold split does not change when a random task matrix is added to the
run.  The generator family is numpy's PCG64 and is recorded in manifests.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

RNG_ID = "numpy-pcg64"

STAGE_FOLDS = 1
STAGE_TASK_MATRIX = 2
STAGE_SYNTHETIC = 3


def derive_rng(seed: int, stage: int) -> np.random.Generator:
    """Deterministic per-stage generator from the root seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), int(stage))))


METHODS = ("lp", "mtlp", "mtlp-inv", "gba", "rw", "knn")
MEASURE_CHOICES = ("diss0", "sim1", "sim2", "sim3", "diss3", "random")
GROUPINGS = ("branch", "branch-size")
LABEL_MODES = ("raw", "class-normalized")
POWERS = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run bit for bit."""

    method: str = "lp"
    measure: str | None = None
    seed: int = 0
    gamma: float = 1.0
    p: float = 1.0
    folds: int = 3
    grouping: str = "branch"
    size_split: int = 20
    min_pos: int = 5
    max_pos: int = 100
    label_mode: str | None = None  # None = per-method default
    networks: tuple = ()
    graph: str | None = None  # pre-integrated network file
    ontology: str | None = None
    annotations: str | None = None
    synthetic: str | None = None  # inline key=value spec
    obo: bool = False
    part_of: bool = False
    renormalize: bool = False
    density: float = 0.5  # measure == "random"
    tau: float = 0.5
    rw_steps: int = 100
    knn_k: int = 5
    solver_rtol: float = 1e-12
    fmax_cafa: bool = False
    output_dir: str = "."
    workers: int = 1

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.measure is not None and self.measure not in MEASURE_CHOICES:
            raise ValueError(f"unknown measure {self.measure!r}")
        if self.method == "mtlp":
            if self.measure not in ("diss0", "diss3", "random"):
                raise ValueError(
                    "mtlp requires a dissimilarity measure (diss0, diss3) or random"
                )
        if self.method == "mtlp-inv":
            if self.measure not in ("sim1", "sim2", "sim3"):
                raise ValueError("mtlp-inv requires a similarity measure (sim1, sim2, sim3)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.p not in POWERS:
            raise ValueError(f"p must be one of {POWERS}")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.grouping not in GROUPINGS:
            raise ValueError(f"unknown grouping {self.grouping!r}")
        if self.label_mode is not None and self.label_mode not in LABEL_MODES:
            raise ValueError(f"unknown label mode {self.label_mode!r}")
        if self.min_pos < 1 or self.max_pos < self.min_pos:
            raise ValueError("selection range must satisfy 1 <= min_pos <= max_pos")
        if not (0 < self.density <= 1) or not (0 < self.tau <= 1):
            raise ValueError("density and tau must lie in (0, 1]")
        if self.rw_steps < 1 or self.rw_steps > 100:
            raise ValueError("random-walk steps must lie in [1, 100]")
        if self.knn_k < 1:
            raise ValueError("knn neighbor count must be at least 1")
        if self.workers < 1:
            raise ValueError("worker count must be at least 1")

    def resolved_label_mode(self) -> str:
        """Per-method default: the plain propagation baseline balances the
        class mass of the training labels, everything else consumes raw
        signs."""
        if self.label_mode is not None:
            return self.label_mode
        return "class-normalized" if self.method == "lp" else "raw"

    def manifest(self) -> dict:
        """Parameters that determine the run's outputs (worker count and
        output paths excluded: they cannot change any value)."""
        from . import __version__

        return {
            "package_version": __version__,
            "report_format": 1,
            "rng": RNG_ID,
            "method": self.method,
            "measure": self.measure,
            "seed": self.seed,
            "gamma": self.gamma,
            "p": self.p,
            "folds": self.folds,
            "grouping": self.grouping,
            "size_split": self.size_split,
            "min_pos": self.min_pos,
            "max_pos": self.max_pos,
            "label_mode": self.resolved_label_mode(),
            "solver_rtol": self.solver_rtol,
            "density": self.density if self.measure == "random" else None,
            "tau": self.tau if self.measure == "random" else None,
            "rw_steps": self.rw_steps if self.method == "rw" else None,
            "knn_k": self.knn_k if self.method == "knn" else None,
            "renormalize": self.renormalize,
            "fmax_cafa": self.fmax_cafa,
            "inputs": {
                "networks": list(self.networks),
                "graph": self.graph,
                "ontology": self.ontology,
                "annotations": self.annotations,
                "synthetic": self.synthetic,
                "obo": self.obo,
                "part_of": self.part_of,
            },
        }


_BOOL_FIELDS = {"obo", "part_of", "renormalize", "fmax_cafa"}
_INT_FIELDS = {"seed", "folds", "size_split", "min_pos", "max_pos", "rw_steps", "knn_k", "workers"}
_FLOAT_FIELDS = {"gamma", "p", "density", "tau", "solver_rtol"}


def parse_config_file(path) -> dict:
    """Parse a flat ``key = value`` file (one assignment per line, # comments).

    ``networks`` takes a comma-separated list; booleans accept true/false.
    Returned keys use the dataclass field names.
    """
    known = {f.name for f in fields(ExperimentConfig)}
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            value = value.strip("\"'")
            if key == "networks":
                out[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key in _BOOL_FIELDS:
                if value.lower() not in ("true", "false"):
                    raise ValueError(f"{path}:{lineno}: boolean expected for {key}")
                out[key] = value.lower() == "true"
            elif key in _INT_FIELDS:
                out[key] = int(value)
            elif key in _FLOAT_FIELDS:
                out[key] = float(value)
            else:
                out[key] = value
    return out
