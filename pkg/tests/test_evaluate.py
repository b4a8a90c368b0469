import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccp.clustering import lloyd
from ccp.errors import ValidationError
from ccp.ingest import ExpressionMatrix, LabelVector
from ccp.evaluate import (
    AriReport,
    Pipeline,
    adjusted_rand_index,
    benchmark,
    kmeans,
    read_reports,
    standard_pipeline,
    write_reports,
)
from ccp.partition import PartitionConfig
from ccp.synthetic import gaussian_blobs
from ccp.tsne import TsneConfig


def pair_count_ari(a, b):
    """ARI from the four pair-agreement counts, looping over every pair."""
    n11 = n10 = n01 = n00 = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        same_a, same_b = a[i] == a[j], b[i] == b[j]
        if same_a and same_b:
            n11 += 1
        elif same_a:
            n10 += 1
        elif same_b:
            n01 += 1
        else:
            n00 += 1
    denom = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00)
    if denom == 0:
        return 1.0 if all((a[i] == a[j]) == (b[i] == b[j]) for i, j in itertools.combinations(range(len(a)), 2)) else 0.0
    return 2.0 * (n11 * n00 - n10 * n01) / denom


# --- ARI ----------------------------------------------------------------------

def test_ari_pair_count_example():
    # a=0, b=c=2, d=2 over the six pairs
    assert pair_count_ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)
    assert adjusted_rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5, abs=1e-12)


def test_ari_identity_and_relabel():
    assert adjusted_rand_index([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert adjusted_rand_index([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert adjusted_rand_index(["x", "x", "y"], [5, 5, 9]) == 1.0


def test_ari_degenerate_denominator():
    assert adjusted_rand_index([0, 0, 0], [1, 1, 1]) == 1.0
    assert adjusted_rand_index([0, 1, 2], [0, 1, 2]) == 1.0
    assert adjusted_rand_index([0, 0, 0, 0], [0, 1, 2, 3]) == 0.0


def test_ari_errors():
    with pytest.raises(ValidationError):
        adjusted_rand_index([0, 1], [0, 1, 1])
    with pytest.raises(ValidationError):
        adjusted_rand_index([0], [0])


labelings = st.integers(2, 12).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 4), min_size=n, max_size=n)))


@settings(max_examples=200, deadline=None)
@given(labelings, st.permutations(range(5)))
def test_ari_matches_pair_counting(pair, perm):
    a, b = pair
    v = adjusted_rand_index(a, b)
    assert v == pytest.approx(pair_count_ari(a, b), abs=1e-12)
    assert v <= 1.0 + 1e-12
    assert adjusted_rand_index(b, a) == pytest.approx(v, abs=1e-12)
    relabelled = [perm[x] for x in a]
    assert adjusted_rand_index(relabelled, b) == pytest.approx(v, abs=1e-12)
    assert adjusted_rand_index(a, a) == 1.0


# --- k-means --------------------------------------------------------------------

def exhaustive_two_means(X):
    best = np.inf
    n = len(X)
    for mask in range(1, 2 ** (n - 1)):
        side = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        cost = sum(((X[s] - X[s].mean(axis=0)) ** 2).sum() for s in (side, ~side))
        best = min(best, cost)
    return best


@pytest.mark.parametrize("seed", range(6))
def test_kmeans_vs_exhaustive_random(seed):
    X = np.random.default_rng(seed).normal(size=(8, 2))
    opt = exhaustive_two_means(X)
    res = lloyd(X, 2, seed=seed)
    assert res.inertia >= opt - 1e-9


def test_kmeans_equals_exhaustive_when_separated():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.1, (4, 2)), rng.normal(10, 0.1, (4, 2))])
    res = lloyd(X, 2, seed=0)
    assert res.inertia == pytest.approx(exhaustive_two_means(X), rel=1e-12)


def test_kmeans_degenerate_k():
    X = np.random.default_rng(1).normal(size=(6, 3))
    res = lloyd(X, 6)
    assert res.inertia == pytest.approx(0.0, abs=1e-12)
    assert len(set(res.labels.tolist())) == 6
    one = lloyd(X, 1)
    np.testing.assert_allclose(one.centers[0], X.mean(axis=0), rtol=1e-12)
    with pytest.raises(ValidationError):
        kmeans(X, 7)


def test_kmeans_seeded_and_1d():
    x = np.array([0.0, 0.1, 0.2, 5.0, 5.1, 5.2])
    a, b = kmeans(x, 2, seed=3), kmeans(x, 2, seed=3)
    np.testing.assert_array_equal(a, b)
    assert adjusted_rand_index(a, [0, 0, 0, 1, 1, 1]) == 1.0


# --- reports and benchmark --------------------------------------------------------

def test_report_aggregates_and_round_trip(tmp_path):
    grid = np.random.default_rng(0).uniform(-0.1, 1.0, (3, 4))
    rep = AriReport("ccp", 3, 4, grid, {"k": 2})
    assert rep.mean_ari == pytest.approx(grid.mean(), abs=1e-12)
    assert rep.std_ari == pytest.approx(grid.std(), abs=1e-12)
    write_reports([rep], tmp_path / "a.json", tmp_path / "a.csv")
    back = read_reports(tmp_path / "a.json")[0]
    np.testing.assert_array_equal(back.per_seed, grid)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "method,mean_ari,std_ari" and len(lines) == 2
    assert float(lines[1].split(",")[1]) == rep.mean_ari


def _cells(labels):
    m = len(labels)
    return ExpressionMatrix([f"c{k}" for k in range(m)], ["g"], np.zeros((m, 1))), LabelVector(labels)


def test_benchmark_identity_pipeline_is_perfect():
    labels = ["a"] * 10 + ["b"] * 10 + ["c"] * 10
    matrix, lab = _cells(labels)
    truth = np.array(lab.codes(), dtype=float)
    pipe = Pipeline("identity", lambda m, seed: truth[:, None] * 10.0)
    rep = benchmark(matrix, lab, pipe, n_reduction_seeds=2, n_clustering_seeds=4)
    assert rep.mean_ari == 1.0 and rep.std_ari == 0.0
    assert rep.per_seed.shape == (2, 4) and rep.meta["k"] == 3


def test_benchmark_random_labels_near_zero():
    labels = list(np.repeat(["a", "b", "c"], 200))
    matrix, lab = _cells(labels)
    # the "reduction" places cells at random type positions, unrelated to truth
    pipe = Pipeline("random", lambda m, seed: np.random.default_rng(seed).integers(0, 3, (m.n_cells, 1)) * 10.0)
    rep = benchmark(matrix, lab, pipe, n_reduction_seeds=3, n_clustering_seeds=3)
    assert abs(rep.mean_ari) < 0.05


def test_benchmark_label_length_mismatch():
    matrix, lab = _cells(["a", "b"])
    with pytest.raises(ValidationError):
        benchmark(matrix, LabelVector(["a"]), Pipeline("x", lambda m, s: m.values))


def test_standard_pipeline_validation():
    with pytest.raises(ValidationError):
        standard_pipeline("raw+external")
    with pytest.raises(ValidationError):
        standard_pipeline("ccp")


def test_small_end_to_end_ccp_pipeline():
    m, lab, _ = gaussian_blobs(n_cells=60, n_genes=200, n_types=3, n_informative=20, seed=2)
    pipe = standard_pipeline("ccp+tsne", PartitionConfig(6, v_c=0.8),
                             tsne_config=TsneConfig(perplexity=10, n_iter=300, exaggeration_iters=100))
    rep = benchmark(m, lab, pipe, n_reduction_seeds=1, n_clustering_seeds=3)
    assert rep.mean_ari > 0.8
