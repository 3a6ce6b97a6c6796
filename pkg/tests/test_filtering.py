"""Centroid set construction, centroid clustering, and instance removal."""

import numpy as np
import pytest

from stylefilter.clustering import kmeans
from stylefilter.errors import FilterError
from stylefilter.filtering import (
    CentroidSet,
    apply_filter,
    build_centroid_set,
    cluster_centroids,
    compute_centroids,
    decide_removal,
    isolated_source_labels,
)
from stylefilter.manifest import Domain, ImageRecord, Manifest

# the published two-round grouping outcome this module must reproduce:
# ten centroids, 0-6 source and 7-9 target
GROUPING_K2 = [[0, 1, 3, 5, 6, 7, 8, 9], [2, 4]]
GROUPING_K4 = [[7], [0, 3, 5, 8, 9], [1, 6], [2, 4]]


def _centroid_set(n_source=7, n_target=3, vectors=None, counts=None):
    if vectors is None:
        vectors = np.random.default_rng(0).random((n_source + n_target, 2))
    if counts is None:
        counts = np.ones(n_source + n_target, dtype=int)
    return CentroidSet(vectors=np.asarray(vectors, dtype=float),
                       n_source=n_source, n_target=n_target,
                       member_counts=np.asarray(counts))


def _manifest(n, domain=Domain.SOURCE):
    return Manifest(
        domain=domain,
        records=tuple(
            ImageRecord(id=f"{domain.id_prefix}-{i:06d}", path=f"{i}.png",
                        domain=domain, width=2, height=2)
            for i in range(n)
        ),
    )


# ---------------------------------------------------------------------------
# centroids

def test_compute_centroids_means():
    pts = np.array([[1.0, 1.0], [3.0, 3.0], [10.0, 0.0]])
    res = kmeans(pts, 2, seed=0, restarts=4)
    centroids = compute_centroids(pts, res, Domain.SOURCE)
    pair = next(c for c in centroids if c.member_count == 2)
    np.testing.assert_allclose(pair.vector, [2.0, 2.0])


def test_compute_centroids_k1_is_dataset_mean():
    pts = np.random.default_rng(1).random((12, 3))
    res = kmeans(pts, 1, seed=0)
    centroids = compute_centroids(pts, res, Domain.TARGET)
    np.testing.assert_allclose(centroids[0].vector, pts.mean(axis=0))


def test_recomputed_centroids_match_stored():
    pts = np.random.default_rng(2).random((40, 4))
    res = kmeans(pts, 5, seed=3, restarts=6)
    centroids = compute_centroids(pts, res, Domain.SOURCE)
    for c in centroids:
        np.testing.assert_allclose(c.vector, res.centroids[c.local_index],
                                   rtol=1e-6, atol=1e-12)


def test_build_centroid_set_labels():
    pts_s = np.random.default_rng(3).random((20, 2))
    pts_t = np.random.default_rng(4).random((9, 2))
    res_s = kmeans(pts_s, 4, seed=0, restarts=4)
    res_t = kmeans(pts_t, 2, seed=0, restarts=4)
    cs = build_centroid_set(
        compute_centroids(pts_s, res_s, Domain.SOURCE),
        compute_centroids(pts_t, res_t, Domain.TARGET),
    )
    assert cs.labels == list(range(6))
    assert cs.source_labels == {0, 1, 2, 3}
    assert cs.target_labels == {4, 5}
    assert cs.domain_of(0) is Domain.SOURCE
    assert cs.domain_of(5) is Domain.TARGET
    assert cs.member_counts.sum() == 29


# ---------------------------------------------------------------------------
# centroid clustering

def _published_geometry():
    positions = {
        0: (0.0, 0.0), 3: (0.5, 0.0), 5: (0.0, 0.5),
        8: (0.3, 0.2), 9: (0.1, 0.4),        # tight group near origin
        1: (10.0, 0.0), 6: (10.6, 0.0),      # mid-distance source pair
        7: (0.0, 12.0),                      # target outlier
        2: (100.0, 0.0), 4: (101.0, 0.0),    # far-away source pair
    }
    vectors = np.array([positions[i] for i in range(10)])
    return _centroid_set(vectors=vectors)


def test_cluster_centroids_reproduces_published_groupings():
    cs = _published_geometry()
    out = cluster_centroids(cs, [2, 4], seed=7, restarts=30)
    assert out.groupings[2] == sorted(
        [sorted(p) for p in GROUPING_K2], key=lambda p: p[0]
    )
    assert out.groupings[4] == sorted(
        [sorted(p) for p in GROUPING_K4], key=lambda p: p[0]
    )


def test_cluster_centroids_coincident_pairs():
    vectors = np.array([[0.0, 0.0], [0.0, 0.0], [50.0, 50.0], [50.0, 50.0]])
    cs = _centroid_set(n_source=2, n_target=2, vectors=vectors)
    out = cluster_centroids(cs, [2], seed=1, restarts=4)
    assert out.groupings[2] == [[0, 1], [2, 3]]
    assert out.diagnostics.silhouette_curve[0] == 1.0


def test_cluster_centroids_validates_range():
    cs = _centroid_set()
    with pytest.raises(FilterError):
        cluster_centroids(cs, [10], seed=0)
    with pytest.raises(FilterError):
        cluster_centroids(cs, [], seed=0)


def test_cluster_centroids_weighting_changes_result():
    # unweighted optimum pairs the middle point with the right one
    # (0.9 < 1.1); a heavy right point pulls its centroid onto itself,
    # so the weighted optimum pairs the middle point with the left one
    vectors = np.array([[0.0, 0.0], [1.1, 0.0], [2.0, 0.0]])
    counts = np.array([1, 1, 100])
    cs = _centroid_set(n_source=2, n_target=1, vectors=vectors, counts=counts)
    unweighted = cluster_centroids(cs, [2], seed=2, restarts=10)
    weighted = cluster_centroids(cs, [2], seed=2, restarts=10,
                                 weight_by_member_count=True)
    assert unweighted.groupings[2] == [[0], [1, 2]]
    assert weighted.groupings[2] == [[0, 1], [2]]


# ---------------------------------------------------------------------------
# isolation + removal decision

def test_isolated_published_k2():
    cs = _centroid_set()
    assert isolated_source_labels(GROUPING_K2, cs) == {2, 4}


def test_isolated_published_k4():
    cs = _centroid_set()
    assert isolated_source_labels(GROUPING_K4, cs) == {1, 2, 4, 6}


def test_isolated_none_when_targets_everywhere():
    cs = _centroid_set(n_source=3, n_target=3)
    grouping = [[0, 3], [1, 4], [2, 5]]
    assert isolated_source_labels(grouping, cs) == set()


def test_isolated_rejects_malformed_partition():
    cs = _centroid_set(n_source=2, n_target=1)
    with pytest.raises(FilterError, match="two parts"):
        isolated_source_labels([[0, 1], [1, 2]], cs)
    with pytest.raises(FilterError, match="not a partition"):
        isolated_source_labels([[0, 1]], cs)


def test_decide_removal_modes():
    per_k = {2: {2, 4}, 4: {1, 2, 4, 6}}
    assert decide_removal(per_k, "all_k") == {2, 4}
    assert decide_removal(per_k, "any_k") == {1, 2, 4, 6}
    assert decide_removal({3: {0, 5}}, "single_k") == {0, 5}
    with pytest.raises(FilterError):
        decide_removal(per_k, "single_k")
    with pytest.raises(FilterError):
        decide_removal({}, "all_k")
    with pytest.raises(FilterError):
        decide_removal(per_k, "most_k")


def test_mode_monotonicity():
    rng = np.random.default_rng(11)
    for _ in range(25):
        ks = [2, 3, 4]
        per_k = {k: set(rng.choice(7, size=rng.integers(0, 5), replace=False)
                        .tolist()) for k in ks}
        removed_all = decide_removal(per_k, "all_k")
        removed_any = decide_removal(per_k, "any_k")
        for k in ks:
            single = decide_removal({k: per_k[k]}, "single_k")
            assert removed_all <= single <= removed_any


# ---------------------------------------------------------------------------
# applying the filter

def test_apply_filter_identity_when_nothing_removed():
    m = _manifest(6)
    assign = np.array([0, 1, 2, 0, 1, 2])
    filtered, report = apply_filter(m, assign, set())
    assert filtered.records == m.records
    assert report.kept_count == 6 and report.removed_count == 0


def test_apply_filter_refuses_total_removal():
    m = _manifest(4)
    assign = np.array([0, 0, 1, 1])
    with pytest.raises(FilterError, match="entire source domain"):
        apply_filter(m, assign, {0, 1})


def test_apply_filter_subsequence_and_counts():
    m = _manifest(8)
    assign = np.array([0, 1, 2, 0, 1, 2, 0, 1])
    filtered, report = apply_filter(m, assign, {1}, mode="all_k")
    kept_ids = [r.id for r in filtered.records]
    assert kept_ids == [r.id for r, a in zip(m.records, assign) if a != 1]
    assert report.kept_count + report.removed_count == len(m.records)
    # subsequence of the original order
    original_ids = [r.id for r in m.records]
    positions = [original_ids.index(i) for i in kept_ids]
    assert positions == sorted(positions)
    assert filtered.created_at == m.created_at


def test_apply_filter_mismatched_assignments():
    m = _manifest(5)
    with pytest.raises(FilterError, match="mismatch"):
        apply_filter(m, np.array([0, 1, 0]), {0})


def test_apply_filter_unknown_cluster():
    m = _manifest(3)
    with pytest.raises(FilterError, match="unknown source clusters"):
        apply_filter(m, np.array([0, 1, 0]), {5})
