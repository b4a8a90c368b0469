"""Synthetic expression data with known cell types, for tests and demos."""

from __future__ import annotations

import numpy as np

from .ingest import ExpressionMatrix, LabelVector


def gaussian_blobs(n_cells=300, n_genes=2000, n_types=3, n_informative=60, center_box=(-10.0, 10.0),
                   cluster_std=1.0, baseline=15.0, seed=0):
    """Balanced Gaussian blobs living on ``n_informative`` genes.

    Blob centres are drawn uniformly from ``center_box`` in the informative
    subspace; cells scatter around their centre with ``cluster_std``. The
    remaining genes are i.i.d. noise with the same standard deviation and
    no type structure. Everything is offset by ``baseline`` and clipped at
    zero so the matrix is a valid non-negative expression matrix.

    Returns ``(matrix, labels, informative_gene_indices)``.
    """
    rng = np.random.default_rng(seed)
    types = np.arange(n_cells) % n_types
    informative = np.sort(rng.permutation(n_genes)[:n_informative])
    centers = rng.uniform(center_box[0], center_box[1], size=(n_types, n_informative))
    X = cluster_std * rng.standard_normal((n_cells, n_genes))
    X[:, informative] += centers[types]
    X += baseline
    np.maximum(X, 0.0, out=X)
    matrix = ExpressionMatrix([f"cell{m}" for m in range(n_cells)], [f"gene{i}" for i in range(n_genes)], X)
    labels = LabelVector([f"type{t}" for t in types])
    return matrix, labels, informative
