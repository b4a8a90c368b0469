"""Kernel projection of gene clusters into super-genes."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ValidationError
from .ingest import ExpressionMatrix, Table
from .partition import GenePartition

DISTANCES = {"euclidean": "euclidean", "manhattan": "cityblock"}


@dataclass(frozen=True)
class KernelParams:
    tau: float = 6.0
    kappa: float = 2.0
    distance: str = "euclidean"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        if not self.kappa > 0:
            raise ValidationError(f"kappa must be positive, got {self.kappa}")
        if self.distance not in DISTANCES:
            raise ValidationError(f"unknown cell distance {self.distance!r}; choose from {sorted(DISTANCES)}")


@dataclass(frozen=True)
class ClusterScale:
    eta: float
    r_c: float

    def to_dict(self):
        # JSON has no infinity literal
        return {"eta": self.eta, "r_c": None if math.isinf(self.r_c) else self.r_c}


def kernel_phi(d, scale: ClusterScale, params: KernelParams):
    """Generalised exponential kernel with a hard cutoff at ``scale.r_c``.

    Accepts a scalar or an array of non-negative distances.
    """
    d = np.asarray(d, dtype=np.float64)
    out = np.exp(-((d / (scale.eta * params.tau)) ** params.kappa))
    out = np.where(d < scale.r_c, out, 0.0)
    return float(out) if out.ndim == 0 else out


def _cells(matrix, gene_set):
    values = matrix.values if isinstance(matrix, ExpressionMatrix) else np.asarray(matrix, dtype=np.float64)
    idx = np.asarray(sorted(gene_set), dtype=np.intp)
    if idx.size == 0:
        raise ValidationError("gene set must be non-empty")
    return values[:, idx]


def scale_from_distances(pairwise: np.ndarray, square: np.ndarray) -> ClusterScale:
    """η and r_c from condensed pairwise distances and the full square matrix."""
    if not (pairwise > 0).any():
        return ClusterScale(1.0, math.inf)
    sq = square.copy()
    np.fill_diagonal(sq, np.inf)
    eta = float(sq.min(axis=1).mean())
    r_c = float(pairwise.mean() + 3.0 * pairwise.std())
    if eta == 0.0:
        # every cell has an exact duplicate; fall back to the mean distance
        eta = float(pairwise.mean())
    return ClusterScale(eta, r_c)


def cluster_scale(matrix, gene_set, params: KernelParams | None = None) -> ClusterScale:
    """Data-derived kernel scale for one gene cluster.

    ``eta`` is the mean over cells of the distance to the nearest other cell
    and ``r_c`` is mean + 3 population standard deviations of all pairwise
    distances. Identical cells give ``eta=1, r_c=inf``.
    """
    Z = _cells(matrix, gene_set)
    if Z.shape[0] < 2:
        raise ValidationError("cluster scale needs at least two cells")
    metric = DISTANCES[(params or KernelParams()).distance]
    square = cdist(Z, Z, metric)
    return scale_from_distances(pdist(Z, metric), square)


def project_cluster(matrix, gene_set, scale: ClusterScale | None, params: KernelParams) -> np.ndarray:
    """Super-gene value of every cell: the sum of kernel values to all cells, self included."""
    Z = _cells(matrix, gene_set)
    if Z.shape[0] == 1:
        return np.ones(1)
    square = cdist(Z, Z, DISTANCES[params.distance])
    if scale is None:
        iu = np.triu_indices(Z.shape[0], 1)
        scale = scale_from_distances(square[iu], square)
    return kernel_phi(square, scale, params).sum(axis=1)


@dataclass
class SuperGeneMatrix:
    cell_ids: tuple
    values: np.ndarray
    columns: tuple
    scales: list = field(default_factory=list)
    partition: GenePartition | None = None
    params: KernelParams | None = None

    @property
    def shape(self):
        return self.values.shape

    def as_table(self) -> Table:
        return Table(self.cell_ids, self.columns, self.values)

    def sidecar(self) -> dict:
        return {
            "kernel": asdict(self.params) if self.params else None,
            "partition_config": asdict(self.partition.config) if self.partition and self.partition.config else None,
            "columns": [
                {"name": name, "n_genes": n, **s.to_dict()}
                for name, n, s in zip(self.columns, self._sizes(), self.scales)
            ],
        }

    def _sizes(self):
        if self.partition is None:
            return [None] * len(self.columns)
        sizes = [len(c) for c in self.partition.clusters]
        if self.partition.lv_set:
            sizes.append(len(self.partition.lv_set))
        return sizes


def ccp_reduce(matrix: ExpressionMatrix, partition: GenePartition, params: KernelParams | None = None) -> SuperGeneMatrix:
    """One super-gene per gene cluster, plus one for the LV set when it is non-empty."""
    params = params or KernelParams()
    if partition.source_gene_count != matrix.n_genes:
        raise ValidationError(
            f"partition covers {partition.source_gene_count} genes, matrix has {matrix.n_genes}"
        )
    groups = list(partition.clusters)
    names = [f"sg_{n + 1}" for n in range(len(groups))]
    if partition.lv_set:
        groups.append(partition.lv_set)
        names.append("lv")
    m = matrix.n_cells
    out = np.empty((m, len(groups)))
    scales = []
    metric = DISTANCES[params.distance]
    iu = np.triu_indices(m, 1)
    for col, genes in enumerate(groups):
        Z = _cells(matrix, genes)
        if m == 1:
            scale = ClusterScale(1.0, math.inf)
            out[:, col] = 1.0
        else:
            square = cdist(Z, Z, metric)
            scale = scale_from_distances(square[iu], square)
            out[:, col] = kernel_phi(square, scale, params).sum(axis=1)
        scales.append(scale)
    return SuperGeneMatrix(matrix.cell_ids, out, tuple(names), scales, partition, params)
