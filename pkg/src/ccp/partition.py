"""Variance ranking, low-variance gene selection and correlation-based gene clustering."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .clustering import lloyd, pam
from .errors import PartitionError, ValidationError
from .ingest import ExpressionMatrix

METHODS = ("kmedoids", "kmeans")
METRICS = ("correlation", "covariance", "euclidean")
COV_EPS = 1e-12
# above this many genes the gene-gene distance matrix is stored in float32
FLOAT32_ABOVE = 10_000


@dataclass(frozen=True)
class PartitionConfig:
    n_supergenes: int
    v_c: float = 0.8
    method: str = "kmedoids"
    metric: str = "correlation"
    seed: int = 0

    def __post_init__(self):
        if int(self.n_supergenes) < 1:
            raise ValidationError("n_supergenes must be >= 1")
        if not 0.0 <= float(self.v_c) <= 1.0:
            raise ValidationError(f"v_c must lie in [0, 1], got {self.v_c}")
        if self.method not in METHODS:
            raise ValidationError(f"unknown cluster method {self.method!r}; choose from {METHODS}")
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}; choose from {METRICS}")


@dataclass(frozen=True)
class GenePartition:
    clusters: tuple
    lv_set: tuple
    source_gene_count: int
    config: PartitionConfig | None = None
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        clusters = tuple(tuple(sorted(int(g) for g in c)) for c in self.clusters)
        lv = tuple(sorted(int(g) for g in self.lv_set))
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "lv_set", lv)
        if any(len(c) == 0 for c in clusters):
            raise PartitionError("empty gene cluster")
        seen = np.zeros(self.source_gene_count, dtype=np.int64)
        for group in (*clusters, lv):
            idx = np.asarray(group, dtype=np.intp)
            if idx.size and (idx.min() < 0 or idx.max() >= self.source_gene_count):
                raise PartitionError("gene index out of range")
            np.add.at(seen, idx, 1)
        if not (seen == 1).all():
            raise PartitionError("clusters and LV set must cover every gene exactly once")

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def to_dict(self) -> dict:
        return {
            "clusters": [list(c) for c in self.clusters],
            "lv_set": list(self.lv_set),
            "source_gene_count": self.source_gene_count,
            "config": asdict(self.config) if self.config else None,
            "stats": self.stats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "GenePartition":
        cfg = PartitionConfig(**d["config"]) if d.get("config") else None
        n = d.get("source_gene_count")
        if n is None:
            n = sum(len(c) for c in d["clusters"]) + len(d["lv_set"])
        return cls(d["clusters"], d["lv_set"], int(n), cfg, d.get("stats", {}))

    @classmethod
    def from_json(cls, text: str) -> "GenePartition":
        return cls.from_dict(json.loads(text))


def gene_variances(matrix) -> np.ndarray:
    """Population variance (divide by M) of every gene column."""
    values = matrix.values if isinstance(matrix, ExpressionMatrix) else np.asarray(matrix, dtype=np.float64)
    return values.var(axis=0)


def select_lv_genes(variances, v_c: float):
    """Split genes into the low-variance set and the kept set.

    Genes are ranked by decreasing variance (ties by ascending index). The
    first ``floor(v_c * I)`` ranks are kept; the rest form the LV set.
    Both returned arrays are sorted gene indices.
    """
    if not 0.0 <= v_c <= 1.0:
        raise ValidationError(f"v_c must lie in [0, 1], got {v_c}")
    variances = np.asarray(variances, dtype=np.float64)
    n = variances.size
    # lexsort: last key is primary
    ranked = np.lexsort((np.arange(n), -variances))
    n_keep = int(np.floor(v_c * n))
    return np.sort(ranked[n_keep:]), np.sort(ranked[:n_keep])


def gene_distance(a, b, metric: str = "correlation") -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("gene vectors must have the same length")
    if metric == "euclidean":
        return float(np.sqrt(((a - b) ** 2).sum()))
    ac, bc = a - a.mean(), b - b.mean()
    na, nb = np.sqrt((ac**2).sum()), np.sqrt((bc**2).sum())
    if metric == "correlation":
        if na == 0 or nb == 0:
            raise ValidationError("correlation distance is undefined for a zero-variance gene")
        return float(min(max(1.0 - (ac @ bc) / (na * nb), 0.0), 2.0))
    if metric == "covariance":
        m = a.size
        cov = (ac @ bc) / m
        return float(min(max(1.0 - cov / (na * nb / m + COV_EPS), 0.0), 2.0))
    raise ValueError(f"unknown metric {metric!r}")


def distance_matrix(genes, metric: str = "correlation") -> np.ndarray:
    """Pairwise distances between the columns of ``genes`` (M x n)."""
    X = np.asarray(genes, dtype=np.float64)
    n = X.shape[1]
    dtype = np.float32 if n > FLOAT32_ABOVE else np.float64
    if metric == "euclidean":
        return squareform(pdist(X.T, "euclidean")).astype(dtype, copy=False)
    Xc = X - X.mean(axis=0)
    norms = np.sqrt((Xc**2).sum(axis=0))
    if metric == "correlation":
        if (norms == 0).any():
            raise ValidationError("correlation distance is undefined for zero-variance genes")
        U = Xc / norms
        D = 1.0 - U.T @ U
    elif metric == "covariance":
        m = X.shape[0]
        D = 1.0 - (Xc.T @ Xc / m) / (np.outer(norms, norms) / m + COV_EPS)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    np.clip(D, 0.0, 2.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D.astype(dtype, copy=False)


def partition_genes(matrix: ExpressionMatrix, kept_genes, config: PartitionConfig,
                    lv_set=()) -> GenePartition:
    """Cluster ``kept_genes`` into ``config.n_supergenes`` groups.

    ``lv_set`` is carried through unchanged into the returned partition.
    """
    kept = np.asarray(kept_genes, dtype=np.intp)
    k = config.n_supergenes
    if kept.size < k:
        raise PartitionError(f"{k} super-genes requested but only {kept.size} genes remain after LV selection")
    genes = matrix.values[:, kept]
    distinct = np.unique(genes.T, axis=0).shape[0]
    if k > distinct:
        raise PartitionError(f"{k} clusters requested but only {distinct} distinct gene vectors")
    stats = {}
    if config.method == "kmedoids":
        D = distance_matrix(genes, config.metric)
        res = pam(D, k, seed=config.seed)
        labels = res.labels
        stats = {"build_cost": res.build_cost, "cost": res.cost, "n_swaps": res.n_swaps,
                 "medoids": [int(kept[m]) for m in res.medoids]}
    else:
        res = lloyd(genes.T, k, seed=config.seed)
        labels = res.labels
        stats = {"inertia": res.inertia, "n_iter": res.n_iter}
    # order clusters by their smallest member gene for a canonical layout
    groups = [kept[labels == j] for j in range(k)]
    empty = [j for j, g in enumerate(groups) if g.size == 0]
    if empty:
        raise PartitionError(f"clusters {empty} ended up empty")
    groups.sort(key=lambda g: int(g.min()))
    return GenePartition(groups, lv_set, matrix.n_genes, config, stats)


def build_partition(matrix: ExpressionMatrix, config: PartitionConfig) -> GenePartition:
    """LV selection first, then clustering on the remaining genes.

    Zero-variance genes go to the LV set whatever their rank.
    """
    variances = gene_variances(matrix)
    lv, kept = select_lv_genes(variances, config.v_c)
    zero = kept[variances[kept] == 0]
    if zero.size:
        kept = kept[variances[kept] > 0]
        lv = np.sort(np.concatenate([lv, zero]))
    return partition_genes(matrix, kept, config, lv_set=lv)
