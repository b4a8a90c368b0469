"""Exact O(M^2) t-SNE with perplexity calibration and PCA initialisation."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import AffinityError, OptimizationError, ParseError, ValidationError
from .ingest import atomic_write_text

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    n_iter: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    init: str = "pca"
    seed: int = 0
    min_gain: float = 0.01

    def __post_init__(self):
        if not self.perplexity > 0:
            raise ValidationError("perplexity must be positive")
        if self.n_iter < 1 or self.exaggeration_iters < 0 or self.n_iter < self.exaggeration_iters:
            raise ValidationError("need n_iter >= exaggeration_iters >= 0 and n_iter >= 1")
        if not (self.early_exaggeration > 0 and self.learning_rate > 0):
            raise ValidationError("early_exaggeration and learning_rate must be positive")
        for m in (self.momentum_early, self.momentum_late):
            if not 0.0 <= m < 1.0:
                raise ValidationError("momentum must lie in [0, 1)")
        if self.init not in ("pca", "random"):
            raise ValidationError(f"unknown init {self.init!r}")


@dataclass
class Embedding2D:
    cell_ids: tuple
    coords: np.ndarray
    kl_trace: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cell_ids = tuple(str(c) for c in self.cell_ids)
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.shape != (len(self.cell_ids), 2):
            raise ValidationError(f"coords shape {self.coords.shape} does not match {len(self.cell_ids)} cells")
        if not np.isfinite(self.coords).all():
            raise ValidationError("embedding contains non-finite coordinates")


def _row_entropy(d_row, beta):
    """Conditional distribution and its natural-log entropy for one row."""
    p = np.exp(-d_row * beta)
    s = p.sum()
    p /= s
    h = float(-(p[p > 0] * np.log(p[p > 0])).sum())
    return p, h


def conditional_affinities(X, perplexity, tol=1e-5, max_steps=100):
    """Row-stochastic Gaussian affinities, bandwidth bisected per row.

    Bisection runs on log(beta) so the bracket covers many orders of
    magnitude. Rows whose off-diagonal distances are all equal are uniform
    at any bandwidth and are returned as such.
    """
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    if m < 4:
        raise ValidationError("t-SNE affinities need at least 4 points")
    if not 0 < perplexity < m - 1:
        raise ValidationError(f"perplexity must lie in (0, {m - 1}), got {perplexity}")
    D = squareform(pdist(X, "sqeuclidean"))
    target = np.log(perplexity)
    P = np.zeros((m, m))
    betas = np.empty(m)
    for i in range(m):
        d = np.delete(D[i], i)
        d = d - d.min()
        spread = d.max()
        if spread <= 1e-12 * max(1.0, D[i].max()):
            P[i, np.arange(m) != i] = 1.0 / (m - 1)
            betas[i] = 0.0
            continue
        d = d / spread
        lo, hi = -50.0, 50.0  # log(beta) on distances scaled to [0, 1]
        for _ in range(max_steps):
            mid = 0.5 * (lo + hi)
            p, h = _row_entropy(d, np.exp(mid))
            if abs(h - target) <= tol:
                break
            if h > target:
                lo = mid
            else:
                hi = mid
        else:
            raise AffinityError(f"entropy bisection did not converge (|H - log perp| = {abs(h - target):.3g})", row=i)
        P[i, np.arange(m) != i] = p
        betas[i] = np.exp(mid) / spread
    return P, betas


def calibrated_affinities(X, perplexity, tol=1e-5, max_steps=100) -> np.ndarray:
    """Symmetric joint affinities P, summing to one."""
    P_cond, _ = conditional_affinities(X, perplexity, tol, max_steps)
    m = P_cond.shape[0]
    return (P_cond + P_cond.T) / (2.0 * m)


def _power_top2(A, tol=1e-9, max_iter=1000):
    """Top two eigenpairs of a symmetric PSD matrix by power iteration with deflation."""
    n = A.shape[0]
    start = np.random.default_rng(12345).standard_normal(n)
    vals, vecs = [], []
    work = A.copy()
    for _ in range(min(2, n)):
        v = start / np.linalg.norm(start)
        for vec in vecs:
            v = v - (v @ vec) * vec
        nv = np.linalg.norm(v)
        if nv == 0:
            vals.append(0.0)
            vecs.append(np.zeros(n))
            continue
        v /= nv
        for _ in range(max_iter):
            w = work @ v
            for vec in vecs:
                w = w - (w @ vec) * vec
            nw = np.linalg.norm(w)
            if nw == 0:
                lam = 0.0
                break
            w /= nw
            done = np.linalg.norm(w - v) < tol
            v = w
            if done:
                break
        lam = float(v @ work @ v)
        vals.append(max(lam, 0.0))
        vecs.append(v)
        work = work - lam * np.outer(v, v)
    while len(vals) < 2:
        vals.append(0.0)
        vecs.append(np.zeros(n))
    return np.array(vals), np.column_stack(vecs)


def pca_directions(X):
    """Top-2 principal directions (D x 2), eigenvalues, centred data, with sign fixed."""
    X = np.asarray(X, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    m, dim = Xc.shape
    if dim <= m:
        vals, V = _power_top2(Xc.T @ Xc)
    else:
        vals, U = _power_top2(Xc @ Xc.T)
        V = Xc.T @ U
        norms = np.linalg.norm(V, axis=0)
        V = np.where(norms > 0, V / np.where(norms > 0, norms, 1.0), 0.0)
    for j in range(V.shape[1]):
        k = int(np.argmax(np.abs(V[:, j])))
        if V[k, j] < 0:
            V[:, j] = -V[:, j]
    return V, vals, Xc


def pca_init(X, seed=0):
    """PCA coordinates scaled so the first column has std 1e-4.

    Returns ``(coords, meta)``; ``meta["init_fallback"]`` is True when the
    input has no variance and a seeded random init was used instead.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValidationError("PCA init needs at least two rows")
    V, vals, Xc = pca_directions(X)
    Y = Xc @ V
    sd = Y[:, 0].std()
    if not sd > 0:
        log.warning("input has zero variance; falling back to random initialisation")
        rng = np.random.default_rng(seed)
        return 1e-4 * rng.standard_normal((X.shape[0], 2)), {"init": "random", "init_fallback": True}
    return Y / sd * 1e-4, {"init": "pca", "init_fallback": False, "eigenvalues": vals.tolist()}


def _q_weights(Y):
    W = 1.0 / (1.0 + squareform(pdist(Y, "sqeuclidean")))
    np.fill_diagonal(W, 0.0)
    return W


def _kl(P, W):
    mask = P > 0
    Q = W[mask] / W.sum()
    return float((P[mask] * np.log(P[mask] / np.maximum(Q, 1e-300))).sum())


def kl_divergence(P, Y) -> float:
    """KL(P || Q) for Student-t Q of the embedding ``Y``."""
    return _kl(P, _q_weights(np.asarray(Y, dtype=np.float64)))


def _grad(P, W, Y):
    PQ = (P - W / W.sum()) * W
    return 4.0 * (PQ.sum(axis=1)[:, None] * Y - PQ @ Y)


def kl_gradient(P, Y):
    """Analytic gradient of KL(P || Q) with respect to ``Y``; returns ``(kl, grad)``."""
    Y = np.asarray(Y, dtype=np.float64)
    W = _q_weights(Y)
    return _kl(P, W), _grad(P, W, Y)


def tsne(X, config: TsneConfig | None = None, cell_ids=None, P=None) -> Embedding2D:
    """Embed the rows of ``X`` into two dimensions.

    Gradient descent with momentum and per-coordinate adaptive gains. The
    KL trace holds ``(iteration, kl)`` after that many updates and is always
    measured against the un-exaggerated affinities.
    """
    config = config or TsneConfig()
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    if cell_ids is None:
        cell_ids = [str(k) for k in range(m)]
    if P is None:
        P = calibrated_affinities(X, config.perplexity)
    if config.init == "pca":
        Y, meta = pca_init(X, config.seed)
    else:
        Y = 1e-4 * np.random.default_rng(config.seed).standard_normal((m, 2))
        meta = {"init": "random", "init_fallback": False}
    meta = {**meta, "config": asdict(config)}

    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    P_ex = P * config.early_exaggeration
    trace = []
    for it in range(1, config.n_iter + 1):
        early = it <= config.exaggeration_iters
        W = _q_weights(Y)
        trace.append((it - 1, _kl(P, W)))
        grad = _grad(P_ex if early else P, W, Y)
        if not np.isfinite(grad).all():
            raise OptimizationError("non-finite gradient", iteration=it)
        momentum = config.momentum_early if early else config.momentum_late
        # grow the gain while the step keeps moving against the gradient
        descending = update * grad < 0.0
        gains = np.where(descending, gains + 0.2, gains * 0.8)
        np.maximum(gains, config.min_gain, out=gains)
        update = momentum * update - config.learning_rate * gains * grad
        Y = Y + update
    trace.append((config.n_iter, kl_divergence(P, Y)))
    return Embedding2D(cell_ids, Y, trace, meta)


def export_coords(embedding: Embedding2D, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell_id", "x", "y"])
    for cid, (x, y) in zip(embedding.cell_ids, embedding.coords.tolist()):
        w.writerow([cid, repr(x), repr(y)])
    atomic_write_text(path, buf.getvalue())


def import_coords(path, reference_ids=None) -> Embedding2D:
    """Read a ``cell_id,x,y`` file, optionally checked against and reordered to ``reference_ids``."""
    ids, coords = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == ["cell_id", "x", "y"]:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, found {len(row)}", path, lineno)
            try:
                coords.append((float(row[1]), float(row[2])))
            except ValueError:
                raise ParseError(f"non-numeric coordinate in {row[1:]!r}", path, lineno) from None
            ids.append(row[0])
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate cell ids", path)
    coords = np.array(coords, dtype=np.float64).reshape(-1, 2)
    if reference_ids is not None:
        reference_ids = [str(r) for r in reference_ids]
        known = set(reference_ids)
        unknown = [c for c in ids if c not in known]
        if unknown:
            raise ValidationError(f"coordinates name unknown cell id(s): {', '.join(unknown[:5])}")
        pos = {c: k for k, c in enumerate(ids)}
        missing = [c for c in reference_ids if c not in pos]
        if missing:
            raise ValidationError(f"coordinates missing for cell id(s): {', '.join(missing[:5])}")
        order = [pos[c] for c in reference_ids]
        ids, coords = reference_ids, coords[order]
    return Embedding2D(ids, coords)


def write_kl_trace(trace, path) -> None:
    lines = ["iteration,kl"] + [f"{it},{kl!r}" for it, kl in trace]
    atomic_write_text(path, "\n".join(lines) + "\n")
