"""k-means (k-means++ / Lloyd) and k-medoids (PAM BUILD + SWAP)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PartitionError

_BLOCK = 1024


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    inertia_history: list
    n_iter: int


def _sq_dists(X, C, x_sq=None):
    if x_sq is None:
        x_sq = np.einsum("ij,ij->i", X, X)
    d = x_sq[:, None] - 2.0 * (X @ C.T) + np.einsum("ij,ij->i", C, C)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def kmeans_plus_plus(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            # inverse-CDF draw on D^2 weights
            cdf = np.cumsum(closest)
            idx = int(np.searchsorted(cdf, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
            while closest[idx] == 0:  # float edge at the CDF boundary
                idx -= 1
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        np.minimum(closest, ((X - X[idx]) ** 2).sum(axis=1), out=closest)
    return X[chosen].copy()


def lloyd(X, k, seed=0, max_iter=300) -> KMeansResult:
    """k-means++ seeding followed by Lloyd iterations until the assignment is a fixpoint."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centers = kmeans_plus_plus(X, k, rng)
    x_sq = np.einsum("ij,ij->i", X, X)
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dists(X, centers, x_sq)
        new_labels = d.argmin(axis=1)
        point_cost = d[np.arange(n), new_labels]
        history.append(float(point_cost.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        occupied = counts > 0
        centers[occupied] = sums[occupied] / counts[occupied, None]
        # re-seed each empty centroid at the point farthest from its own centroid
        cost = point_cost.copy()
        for j in np.flatnonzero(~occupied):
            far = int(cost.argmax())
            centers[j] = X[far]
            cost[far] = -1.0
    d = _sq_dists(X, centers, x_sq)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(n), labels].sum())
    return KMeansResult(labels, centers, inertia, history, n_iter)


@dataclass
class PamResult:
    medoids: np.ndarray
    labels: np.ndarray
    cost: float
    build_cost: float
    cost_history: list
    n_swaps: int


def _assign(D, medoids):
    sub = D[:, medoids]
    labels = sub.argmin(axis=1)
    dnear = sub[np.arange(D.shape[0]), labels]
    if len(medoids) > 1:
        part = np.partition(sub, 1, axis=1)
        dsecond = part[:, 1]
    else:
        dsecond = np.full(D.shape[0], np.inf, dtype=D.dtype)
    labels[medoids] = np.arange(len(medoids))
    dnear[medoids] = 0.0
    return labels, dnear, dsecond


def pam_build(D, k, seed=0):
    """Greedy BUILD. Ties are broken by a seeded candidate order."""
    n = D.shape[0]
    order = np.random.default_rng(seed).permutation(n)
    row_sums = np.concatenate([D[order[s:s + _BLOCK]].sum(axis=1, dtype=np.float64)
                               for s in range(0, n, _BLOCK)])
    first = int(order[int(np.argmin(row_sums))])
    medoids = [first]
    dnear = D[first].astype(np.float64)
    is_med = np.zeros(n, dtype=bool)
    is_med[first] = True
    for _ in range(1, k):
        gains = np.empty(n)
        for s in range(0, n, _BLOCK):
            block = order[s:s + _BLOCK]
            gains[s:s + len(block)] = np.maximum(dnear[None, :] - D[block], 0.0).sum(axis=1)
        gains[is_med[order]] = -np.inf
        pick = int(order[int(np.argmax(gains))])
        medoids.append(pick)
        is_med[pick] = True
        np.minimum(dnear, D[pick], out=dnear)
    return np.array(medoids, dtype=np.intp)


def pam(D, k, seed=0, max_swaps=100) -> PamResult:
    """PAM on a precomputed symmetric distance matrix.

    Each pass evaluates every (medoid, non-medoid) exchange and applies the
    single best one; stops when no exchange lowers the total cost or after
    ``max_swaps`` passes.
    """
    D = np.asarray(D)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if k < 1 or k > n:
        raise PartitionError(f"k={k} must lie in [1, {n}]")
    medoids = pam_build(D, k, seed)
    labels, dnear, dsecond = _assign(D, medoids)
    cost = float(dnear.sum())
    build_cost = cost
    history = [cost]
    n_swaps = 0
    for _ in range(max_swaps):
        if k == n:
            break
        onehot = np.zeros((n, k))
        onehot[np.arange(n), labels] = 1.0
        best = (0.0, -1, -1)
        for s in range(0, n, _BLOCK):
            Dx = D[s:s + _BLOCK].astype(np.float64)
            T = np.minimum(Dx - dnear[None, :], 0.0)
            R = np.minimum(Dx, dsecond[None, :]) - dnear[None, :]
            delta = T.sum(axis=1)[:, None] + (R - T) @ onehot
            delta[np.isin(np.arange(s, s + Dx.shape[0]), medoids)] = np.inf
            flat = int(np.argmin(delta))
            r, c = divmod(flat, k)
            if delta[r, c] < best[0]:
                best = (float(delta[r, c]), s + r, c)
        gain, cand, slot = best
        if cand < 0 or gain >= -1e-12 * max(1.0, cost):
            break
        trial = medoids.copy()
        trial[slot] = cand
        t_labels, t_dnear, t_dsecond = _assign(D, trial)
        t_cost = float(t_dnear.sum())
        if t_cost >= cost:  # guards against rounding in the delta estimate
            break
        medoids, labels, dnear, dsecond, cost = trial, t_labels, t_dnear, t_dsecond, t_cost
        history.append(cost)
        n_swaps += 1
    # canonical order: clusters sorted by medoid index
    order = np.argsort(medoids, kind="stable")
    medoids = medoids[order]
    labels, dnear, _ = _assign(D, medoids)
    return PamResult(medoids, labels, float(dnear.sum()), build_cost, history, n_swaps)


def total_cost(D, medoids) -> float:
    return float(np.asarray(D)[:, medoids].min(axis=1).sum())
