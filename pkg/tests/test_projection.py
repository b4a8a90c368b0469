import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccp.errors import ValidationError
from ccp.ingest import ExpressionMatrix
from ccp.partition import GenePartition
from ccp.projection import (
    ClusterScale,
    KernelParams,
    ccp_reduce,
    cluster_scale,
    kernel_phi,
    project_cluster,
)


def matrix(values):
    values = np.asarray(values, dtype=float)
    m, i = values.shape
    return ExpressionMatrix([f"c{k}" for k in range(m)], [f"g{k}" for k in range(i)], values)


def naive_project(Z, tau, kappa, manhattan=False):
    """Independent double-loop oracle for the super-gene of one cluster."""
    m = len(Z)

    def dist(a, b):
        if manhattan:
            return sum(abs(x - y) for x, y in zip(a, b))
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))

    pair = [dist(Z[i], Z[j]) for i in range(m) for j in range(i + 1, m)]
    if not any(d > 0 for d in pair):
        eta, r_c = 1.0, math.inf
    else:
        nn = [min(dist(Z[i], Z[j]) for j in range(m) if j != i) for i in range(m)]
        eta = sum(nn) / m
        mean = sum(pair) / len(pair)
        r_c = mean + 3 * math.sqrt(sum((d - mean) ** 2 for d in pair) / len(pair))
        if eta == 0:
            eta = mean
    out = []
    for i in range(m):
        s = 0.0
        for j in range(m):
            d = dist(Z[i], Z[j])
            if d < r_c:
                s += math.exp(-((d / (eta * tau)) ** kappa))
        out.append(s)
    return out, eta, r_c


# --- kernel ---------------------------------------------------------------

def test_kernel_at_zero_is_one():
    assert kernel_phi(0.0, ClusterScale(2.0, 10.0), KernelParams()) == 1.0


def test_kernel_at_eta_tau_is_inverse_e():
    params = KernelParams(tau=6.0, kappa=2.0)
    assert kernel_phi(12.0, ClusterScale(2.0, 100.0), params) == pytest.approx(math.exp(-1), abs=1e-15)


def test_kernel_cutoff_is_strict():
    scale = ClusterScale(1.0, 3.0)
    assert kernel_phi(3.0, scale, KernelParams()) == 0.0
    assert kernel_phi(2.999, scale, KernelParams()) > 0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.5, 5), st.floats(0.1, 10), st.floats(0.2, 4))
def test_kernel_monotone_and_bounded(eta, r_c, tau, kappa):
    d = np.linspace(0, 2 * r_c, 50)
    phi = kernel_phi(d, ClusterScale(eta, r_c), KernelParams(tau, kappa))
    assert ((phi >= 0) & (phi <= 1)).all()
    assert (np.diff(phi) <= 0).all()


# --- cluster scale examples ---------------------------------------------------

def test_two_cells_scale_and_values():
    m = matrix([[0.0], [5.0]])
    s = cluster_scale(m, [0])
    assert s.eta == pytest.approx(5.0) and s.r_c == pytest.approx(5.0)
    # d = r_c is outside the cutoff, so only the self term survives
    np.testing.assert_allclose(project_cluster(m, [0], s, KernelParams()), [1.0, 1.0])


def test_three_collinear_cells_scale():
    m = matrix([[0.0], [1.0], [3.0]])
    s = cluster_scale(m, [0])
    assert s.eta == pytest.approx(4 / 3, abs=1e-12)
    assert s.r_c == pytest.approx(2 + 3 * np.std([1.0, 2.0, 3.0]), abs=1e-12)
    expected, _, _ = naive_project([[0.0], [1.0], [3.0]], 6.0, 2.0)
    np.testing.assert_allclose(project_cluster(m, [0], None, KernelParams()), expected, rtol=1e-12)


def test_pair_at_eta_tau_gives_one_plus_inverse_e():
    m = matrix([[0.0], [6.0]])
    v = project_cluster(m, [0], ClusterScale(1.0, 10.0), KernelParams(tau=6.0, kappa=1.5))
    np.testing.assert_allclose(v, [1 + math.exp(-1)] * 2, rtol=1e-14)


def test_identical_cells_degenerate():
    m = matrix([[2.0, 1.0]] * 4)
    s = cluster_scale(m, [0, 1])
    assert s.eta == 1.0 and math.isinf(s.r_c)
    np.testing.assert_array_equal(project_cluster(m, [0, 1], s, KernelParams()), [4.0] * 4)


def test_all_cells_duplicated_uses_mean_distance():
    m = matrix([[0.0], [0.0], [4.0], [4.0]])
    s = cluster_scale(m, [0])
    # pairwise distances 0, 4, 4, 4, 4, 0
    assert s.eta == pytest.approx(8 / 3)
    expected, _, _ = naive_project([[0.0], [0.0], [4.0], [4.0]], 6.0, 2.0)
    np.testing.assert_allclose(project_cluster(m, [0], s, KernelParams()), expected, rtol=1e-12)


def test_single_cell():
    m = matrix([[1.0, 2.0]])
    np.testing.assert_array_equal(project_cluster(m, [0, 1], None, KernelParams()), [1.0])


def test_empty_gene_set_rejected():
    with pytest.raises(ValidationError):
        project_cluster(matrix([[1.0], [2.0]]), [], None, KernelParams())


# --- full reduction -----------------------------------------------------------

def random_counts(seed, m=12, i=9):
    rng = np.random.default_rng(seed)
    return rng.poisson(3.0, size=(m, i)).astype(float)


@pytest.mark.parametrize("distance", ["euclidean", "manhattan"])
def test_reduce_matches_naive_oracle(distance):
    X = random_counts(4)
    part = GenePartition([(0, 3, 5), (1, 2), (4, 6)], (7, 8), 9)
    params = KernelParams(tau=2.5, kappa=1.7, distance=distance)
    out = ccp_reduce(matrix(X), part, params)
    assert out.columns == ("sg_1", "sg_2", "sg_3", "lv")
    for col, genes in enumerate([(0, 3, 5), (1, 2), (4, 6), (7, 8)]):
        expected, eta, r_c = naive_project(X[:, genes].tolist(), 2.5, 1.7, distance == "manhattan")
        np.testing.assert_allclose(out.values[:, col], expected, rtol=1e-12)
        assert out.scales[col].eta == pytest.approx(eta, rel=1e-12)


def test_no_lv_column_when_lv_empty():
    out = ccp_reduce(matrix(random_counts(0, i=4)), GenePartition([(0, 1), (2, 3)], (), 4))
    assert out.columns == ("sg_1", "sg_2")


def test_values_bounded_by_cell_count():
    X = random_counts(2, m=20)
    out = ccp_reduce(matrix(X), GenePartition([tuple(range(9))], (), 9))
    assert ((out.values >= 1.0) & (out.values <= 20.0)).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_equivariance(seed):
    X = random_counts(seed)
    part = GenePartition([(0, 1, 2, 3), (4, 5, 6)], (7, 8), 9)
    perm = np.random.default_rng(seed).permutation(X.shape[0])
    a = ccp_reduce(matrix(X), part).values
    b = ccp_reduce(matrix(X[perm]), part).values
    np.testing.assert_allclose(b, a[perm], rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 20))
def test_uniform_scaling_invariance(seed, c):
    # eta and r_c scale with the data, so the super-genes are unchanged
    X = random_counts(seed)
    part = GenePartition([(0, 1, 2, 3, 4), (5, 6, 7, 8)], (), 9)
    a = ccp_reduce(matrix(X), part).values
    b = ccp_reduce(matrix(X * c), part).values
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_larger_tau_does_not_decrease_values():
    X = random_counts(7)
    part = GenePartition([tuple(range(9))], (), 9)
    lo = ccp_reduce(matrix(X), part, KernelParams(tau=2.0)).values
    hi = ccp_reduce(matrix(X), part, KernelParams(tau=8.0)).values
    assert (hi >= lo - 1e-12).all()


def test_partition_gene_count_mismatch():
    with pytest.raises(ValidationError):
        ccp_reduce(matrix(random_counts(0)), GenePartition([(0, 1)], (), 2))


def test_sidecar_serialises_infinite_cutoff():
    m = matrix([[1.0, 0.0], [1.0, 3.0], [1.0, 5.0]])
    out = ccp_reduce(m, GenePartition([(1,)], (0,), 2))
    cols = out.sidecar()["columns"]
    assert cols[1]["name"] == "lv" and cols[1]["r_c"] is None
    assert cols[0]["n_genes"] == 1


@pytest.mark.parametrize("kwargs", [dict(tau=0), dict(kappa=-1), dict(distance="cosine")])
def test_kernel_params_validation(kwargs):
    with pytest.raises(ValidationError):
        KernelParams(**kwargs)


def test_three_cell_toy_shape():
    X = np.array([[1.0, 0.0, 2.0], [0.0, 3.0, 1.0], [2.0, 2.0, 0.0]])
    out = ccp_reduce(matrix(X), GenePartition([(0,), (1,)], (2,), 3))
    assert out.shape == (3, 3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=8), st.floats(0.01, 20), st.floats(0.2, 3), st.floats(0.5, 3))
def test_moving_a_cell_away_does_not_increase_it(others, push, eta, kappa):
    # cell 0 sits left of every other cell on one gene; pushing it further left
    # lengthens every distance from it
    scale, params = ClusterScale(eta, 8.0), KernelParams(kappa=kappa)
    lo = min(others)
    near = np.array([[lo - 1.0 + 30.0]] + [[x + 30.0] for x in others])
    far = near.copy()
    far[0, 0] -= push
    before = project_cluster(matrix(near), [0], scale, params)[0]
    after = project_cluster(matrix(far), [0], scale, params)[0]
    assert after <= before + 1e-12


def test_wide_matrix_shape_at_full_gene_count():
    # 19189 genes, N=300 -> one column per cluster plus the LV column
    from ccp.partition import PartitionConfig, build_partition

    rng = np.random.default_rng(0)
    X = rng.gamma(0.5, 1.0, size=(12, 19189))
    part = build_partition(matrix(X), PartitionConfig(300, v_c=0.8, method="kmeans", metric="euclidean"))
    assert len(part.lv_set) == 19189 - int(0.8 * 19189)
    assert ccp_reduce(matrix(X), part).shape == (12, 301)
