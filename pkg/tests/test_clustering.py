import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import unit_rows
from mcrn.clustering import (
    NOISE,
    ClusterLabeling,
    DegenerateClusteringError,
    Domain,
    PseudoDataset,
    build_pseudo_dataset,
    corrupt_clusters,
    dbscan,
    labelled_dataset,
    relabel_contiguous,
)


def reference_dbscan(x, eps, min_pts):
    """Union-find over core points; a border point takes the lowest-numbered adjacent component."""
    n = len(x)
    near = (1.0 - x @ x.T) <= eps
    core = near.sum(axis=1) >= min_pts
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if core[i] and core[j] and near[i, j]:
                a, b = find(i), find(j)
                parent[max(a, b)] = min(a, b)
    # number components by their smallest core index
    comp_id = {}
    labels = np.full(n, NOISE)
    for i in range(n):
        if core[i]:
            root = find(i)
            comp_id.setdefault(root, len(comp_id))
            labels[i] = comp_id[root]
    for i in range(n):
        if not core[i]:
            cands = [labels[j] for j in range(n) if core[j] and near[i, j]]
            if cands:
                labels[i] = min(cands)
    return labels


def blobs(rng, n_blobs=3, per=10, dim=4, noise=0.05):
    centres = np.eye(dim)[:n_blobs]
    x = np.repeat(centres, per, axis=0) + noise * rng.normal(size=(n_blobs * per, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True), np.repeat(np.arange(n_blobs), per)


def test_separates_blobs(rng):
    x, truth = blobs(rng)
    lab = dbscan(x, eps=0.1, min_pts=4)
    assert lab.n_clusters == 3 and lab.n_noise == 0
    assert np.array_equal(lab.assignment, truth)


def test_all_noise_when_eps_tiny(rng):
    x = unit_rows(rng, 20, 8)
    lab = dbscan(x, eps=1e-9, min_pts=2)
    assert lab.n_clusters == 0 and lab.noise_fraction == 1.0


def test_single_cluster_when_eps_large(rng):
    lab = dbscan(unit_rows(rng, 15, 3), eps=2.0, min_pts=3)
    assert lab.n_clusters == 1 and lab.n_noise == 0


def test_empty_input():
    assert dbscan(np.empty((0, 3))).n_clusters == 0


def test_rejects_bad_parameters(rng):
    with pytest.raises(ValueError):
        dbscan(unit_rows(rng, 3, 2), eps=0.0)
    with pytest.raises(ValueError):
        dbscan(unit_rows(rng, 3, 2), min_pts=0)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.05, 0.1, 0.2, 0.4]), st.integers(1, 5))
def test_matches_reference(seed, eps, min_pts):
    rng = np.random.default_rng(seed)
    x, _ = blobs(rng, n_blobs=3, per=int(rng.integers(2, 9)), dim=3, noise=0.3)
    np.testing.assert_array_equal(dbscan(x, eps, min_pts).assignment, reference_dbscan(x, eps, min_pts))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_larger_eps_never_adds_noise_or_clusters_split(seed):
    rng = np.random.default_rng(seed)
    x, _ = blobs(rng, n_blobs=3, per=6, dim=3, noise=0.4)
    small, large = dbscan(x, 0.1, 3), dbscan(x, 0.3, 3)
    assert large.n_noise <= small.n_noise
    # points clustered together at small eps stay together among cores at large eps
    core_small = (1.0 - x @ x.T <= 0.1).sum(axis=1) >= 3
    for c in range(small.n_clusters):
        members = np.flatnonzero((small.assignment == c) & core_small)
        assert len(set(large.assignment[members])) == 1


def test_relabel_contiguous():
    np.testing.assert_array_equal(relabel_contiguous([7, 3, 7, 9]), [1, 0, 1, 2])


def test_build_pseudo_dataset_drops_noise():
    lab = ClusterLabeling(np.array([2, NOISE, 0, 2, 0]), 3)
    ds = build_pseudo_dataset(lab, Domain.TARGET, [5, 6, 7, 8, 9])
    np.testing.assert_array_equal(ds.indices, [0, 2, 3, 4])
    np.testing.assert_array_equal(ds.labels, [1, 0, 1, 0])
    np.testing.assert_array_equal(ds.identities, [5, 7, 8, 9])


def test_build_pseudo_dataset_all_noise():
    with pytest.raises(DegenerateClusteringError):
        build_pseudo_dataset(ClusterLabeling(np.full(4, NOISE), 0), Domain.TARGET, np.arange(4))


def test_pseudo_dataset_rejects_gaps():
    with pytest.raises(ValueError):
        PseudoDataset(Domain.TARGET, np.arange(3), np.array([0, 2, 2]), np.arange(3))


def test_corrupt_merge_counts(rng):
    ds = labelled_dataset(np.repeat(np.arange(10), 5), Domain.TARGET)
    out = corrupt_clusters(ds, 2, 0, rng)
    assert out.n_classes == 8
    sizes = sorted(out.class_sizes())
    assert sizes == [5] * 6 + [10, 10]


def test_corrupt_split_halves(rng):
    ds = labelled_dataset(np.repeat(np.arange(4), 5), Domain.SOURCE)
    out = corrupt_clusters(ds, 0, 1, rng)
    assert out.n_classes == 5
    assert sorted(out.class_sizes()) == [2, 3, 5, 5, 5]
    # identities are never touched
    np.testing.assert_array_equal(out.identities, ds.identities)


def test_corrupt_identity_and_infeasible(rng):
    ds = labelled_dataset(np.repeat(np.arange(4), 2), Domain.TARGET)
    same = corrupt_clusters(ds, 0, 0, rng)
    np.testing.assert_array_equal(same.labels, ds.labels)
    with pytest.raises(ValueError):
        corrupt_clusters(ds, 2, 1, rng)
