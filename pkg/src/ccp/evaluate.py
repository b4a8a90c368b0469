"""Clustering accuracy: k-means on reduced data scored by the adjusted Rand index."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .clustering import lloyd
from .errors import ValidationError
from .ingest import ExpressionMatrix, LabelVector, atomic_write_text

log = logging.getLogger(__name__)

METHOD_TAGS = ("ccp", "ccp+tsne", "ccp+external", "raw+tsne", "raw+external")


def kmeans(X, k: int, seed=0, max_iter=300) -> np.ndarray:
    """Cluster labels from k-means++ seeding and Lloyd iterations."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if k > X.shape[0]:
        raise ValidationError(f"k={k} exceeds the number of points ({X.shape[0]})")
    return lloyd(X, k, seed=seed, max_iter=max_iter).labels


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def adjusted_rand_index(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"label vectors must be 1-D and equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise ValidationError("ARI needs at least two samples")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(a.size)
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0:
        same = table.shape[0] == table.shape[1] and np.count_nonzero(table) == table.shape[0]
        return 1.0 if same else 0.0
    return float((sum_ij - expected) / denom)


@dataclass
class AriReport:
    method: str
    n_reduction_seeds: int
    n_clustering_seeds: int
    per_seed: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.per_seed = np.asarray(self.per_seed, dtype=np.float64).reshape(
            self.n_reduction_seeds, self.n_clustering_seeds
        )

    @property
    def mean_ari(self) -> float:
        return float(self.per_seed.mean())

    @property
    def std_ari(self) -> float:
        return float(self.per_seed.std())

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_reduction_seeds": self.n_reduction_seeds,
            "n_clustering_seeds": self.n_clustering_seeds,
            "mean_ari": self.mean_ari,
            "std_ari": self.std_ari,
            "per_seed": self.per_seed.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AriReport":
        return cls(d["method"], d["n_reduction_seeds"], d["n_clustering_seeds"], d["per_seed"], d.get("meta", {}))


def write_reports(reports, json_path=None, csv_path=None) -> None:
    if json_path is not None:
        atomic_write_text(json_path, json.dumps({"reports": [r.to_dict() for r in reports]}, indent=1) + "\n")
    if csv_path is not None:
        lines = ["method,mean_ari,std_ari"] + [f"{r.method},{r.mean_ari!r},{r.std_ari!r}" for r in reports]
        atomic_write_text(csv_path, "\n".join(lines) + "\n")


def read_reports(json_path) -> list:
    with open(json_path, encoding="utf-8") as fh:
        return [AriReport.from_dict(d) for d in json.load(fh)["reports"]]


@dataclass
class Pipeline:
    """A reduction to benchmark: ``reduce(matrix, seed)`` returns an M x D array."""

    method: str
    reduce: Callable[[ExpressionMatrix, int], np.ndarray]
    meta: dict = field(default_factory=dict)


def score_grid(reduced: list, truth, k: int, n_clustering_seeds: int) -> np.ndarray:
    """ARI of k-means on each reduced array for every clustering seed."""
    out = np.empty((len(reduced), n_clustering_seeds))
    for r, X in enumerate(reduced):
        for c in range(n_clustering_seeds):
            out[r, c] = adjusted_rand_index(truth, kmeans(X, k, seed=c))
    return out


def benchmark(matrix: ExpressionMatrix, labels: LabelVector, pipeline: Pipeline,
              n_reduction_seeds: int = 10, n_clustering_seeds: int = 30, k: int | None = None) -> AriReport:
    """Mean/std ARI over a reduction-seed by clustering-seed grid.

    ``k`` defaults to the number of distinct true cell types.
    """
    if len(labels) != matrix.n_cells:
        raise ValidationError(f"{len(labels)} labels for {matrix.n_cells} cells")
    truth = labels.codes()
    k = k or len(labels.distinct_types)
    reduced = []
    for r in range(n_reduction_seeds):
        log.info("%s: reduction seed %d/%d", pipeline.method, r + 1, n_reduction_seeds)
        reduced.append(np.asarray(pipeline.reduce(matrix, r), dtype=np.float64))
    grid = score_grid(reduced, truth, k, n_clustering_seeds)
    return AriReport(pipeline.method, n_reduction_seeds, n_clustering_seeds, grid, {**pipeline.meta, "k": k})


def standard_pipeline(method: str, partition_config=None, kernel=None, tsne_config=None) -> Pipeline:
    """Build the ``ccp``, ``ccp+tsne`` or ``raw+tsne`` pipeline.

    The reduction seed replaces the seed of the partition and t-SNE configs.
    """
    from dataclasses import replace

    from .partition import build_partition
    from .projection import KernelParams, ccp_reduce
    from .tsne import TsneConfig, tsne

    kernel = kernel or KernelParams()
    tsne_config = tsne_config or TsneConfig()
    if method not in ("ccp", "ccp+tsne", "raw+tsne"):
        raise ValidationError(f"method {method!r} has no built-in pipeline; external methods are evaluated from files")
    if method != "raw+tsne" and partition_config is None:
        raise ValidationError(f"{method} needs a partition config")

    def supergenes(matrix, seed):
        part = build_partition(matrix, replace(partition_config, seed=seed))
        return ccp_reduce(matrix, part, kernel).values

    def reduce(matrix, seed):
        if method == "raw+tsne":
            X = matrix.values
        else:
            X = supergenes(matrix, seed)
            if method == "ccp":
                return X
        return tsne(X, replace(tsne_config, seed=seed)).coords

    return Pipeline(method, reduce)
