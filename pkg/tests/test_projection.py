"""PCA and exact t-SNE diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from stylefilter.clustering import kmeans
from stylefilter.errors import ProjectionError
from stylefilter.projection import (
    export_projection,
    joint_affinities,
    parse_projection_table,
    pca_project,
    tsne_project,
)


def make_blobs(centers, per_blob=30, sigma=0.1, seed=0):
    rng = np.random.default_rng(seed)
    points, labels = [], []
    for i, c in enumerate(centers):
        points.append(rng.normal(loc=c, scale=sigma, size=(per_blob, len(c))))
        labels += [i] * per_blob
    return np.vstack(points), np.array(labels)


# ---------------------------------------------------------------------------
# PCA

def test_pca_rank1_line():
    t = np.linspace(-2, 2, 9)
    pts = np.column_stack([t, 2 * t])
    proj = pca_project(pts, 2)
    ratios = proj.method_params["explained_variance_ratio"]
    assert ratios[0] >= 1.0 - 1e-9
    assert ratios[1] == pytest.approx(0.0, abs=1e-9)


def test_pca_axis_aligned_copy():
    # sample covariance exactly diagonal with var_x > var_y, so the
    # components must be the coordinate axes themselves
    pts = np.array([[3.0, 0.0], [-3.0, 0.0], [1.0, 0.0], [-1.0, 0.0],
                    [0.0, 1.0], [0.0, -1.0]])
    proj = pca_project(pts, 2)
    np.testing.assert_allclose(proj.coords, pts, atol=1e-9)


def test_pca_reconstruction_error_equals_discarded_eigenvalues():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(30, 5)) @ np.diag([3.0, 2.0, 1.0, 0.5, 0.1])
    centered = x - x.mean(axis=0)
    proj = pca_project(x, 2)
    comps = np.array(proj.method_params["components"])
    recon = proj.coords @ comps
    err = ((centered - recon) ** 2).sum()
    svals2 = np.linalg.svd(centered, compute_uv=False) ** 2
    assert err == pytest.approx(svals2[2:].sum(), rel=1e-6)


def test_pca_ratio_sum_and_monotone():
    x = np.random.default_rng(9).normal(size=(20, 6))
    proj = pca_project(x, 2)
    ratios = proj.method_params["explained_variance_ratio"]
    assert sum(ratios) == pytest.approx(1.0, abs=1e-9)
    assert all(b <= a + 1e-12 for a, b in zip(ratios, ratios[1:]))


def test_pca_out_dims_too_large():
    with pytest.raises(ProjectionError):
        pca_project(np.zeros((2, 5)) + np.arange(5), 2)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_pca_isometry_invariance(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(15, 4))
    rot = ortho_group.rvs(4, random_state=seed)
    r1 = pca_project(x, 2).method_params["explained_variance_ratio"]
    r2 = pca_project(x @ rot, 2).method_params["explained_variance_ratio"]
    np.testing.assert_allclose(r1, r2, atol=1e-9)


def test_pca_component_orthonormality():
    x = np.random.default_rng(11).normal(size=(25, 6))
    comps = np.array(pca_project(x, 2).method_params["components"])
    gram = comps @ comps.T
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-9)


# ---------------------------------------------------------------------------
# t-SNE

def test_affinities_symmetric_and_normalized():
    x, _ = make_blobs([(0, 0), (5, 5)], per_blob=10, seed=13)
    p = joint_affinities(x, perplexity=5)
    np.testing.assert_allclose(p, p.T, atol=1e-15)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_bisection_matches_target_entropy():
    x, _ = make_blobs([(0, 0), (3, 3), (6, 0)], per_blob=8, seed=17)
    from scipy.spatial.distance import cdist
    from stylefilter.projection import _conditional_affinities

    perplexity = 6.0
    cond = _conditional_affinities(cdist(x, x, "sqeuclidean"), perplexity)
    for i in range(len(x)):
        row = cond[i][cond[i] > 0]
        entropy = -(row * np.log2(row)).sum()
        assert entropy == pytest.approx(np.log2(perplexity), abs=1e-4)


def test_tsne_three_blobs_recovered_by_kmeans():
    x, labels = make_blobs([(0, 0), (10, 0), (0, 10)], per_blob=30,
                           sigma=0.1, seed=19)
    proj = tsne_project(x, perplexity=20, iterations=600, seed=3)
    assert proj.method_params["kl_final"] < proj.method_params["kl_initial"]
    res = kmeans(proj.coords, 3, seed=5, restarts=20)
    # the 2-D clustering must match the generating blob partition exactly
    mapping = {}
    for got, truth in zip(res.assignments, labels):
        assert mapping.setdefault(int(got), int(truth)) == int(truth)


def test_tsne_seed_determinism():
    x, _ = make_blobs([(0, 0), (4, 4)], per_blob=10, seed=23)
    p1 = tsne_project(x, perplexity=5, iterations=100, seed=9)
    p2 = tsne_project(x, perplexity=5, iterations=100, seed=9)
    assert p1.coords.tobytes() == p2.coords.tobytes()
    p3 = tsne_project(x, perplexity=5, iterations=100, seed=10)
    assert p3.coords.tobytes() != p1.coords.tobytes()


def test_tsne_perplexity_infeasible():
    x = np.random.default_rng(29).normal(size=(10, 3))
    with pytest.raises(ProjectionError, match="infeasible"):
        tsne_project(x, perplexity=3.0, iterations=50)


# ---------------------------------------------------------------------------
# export

def test_export_roundtrip(tmp_path):
    x, labels = make_blobs([(0, 0), (7, 7)], per_blob=5, seed=31)
    ids = [f"src-{i:06d}" for i in range(len(x))]
    proj = pca_project(x, 2, point_ids=ids, cluster_labels=labels.tolist())
    out = tmp_path / "proj.tsv"
    export_projection(proj, out, svg_path=tmp_path / "proj.svg")
    text = out.read_text().splitlines()
    assert text[0] == "id\tx\ty\tcluster\tdomain"
    assert len(text) == 1 + len(x)
    back = parse_projection_table(out)
    np.testing.assert_allclose(back.coords, proj.coords, atol=1e-6)
    assert back.point_ids == ids
    assert back.domains == ["source"] * len(x)
    assert (tmp_path / "proj.svg").read_text().startswith("<svg")


def test_export_empty_refused(tmp_path):
    proj = pca_project(np.random.default_rng(1).random((3, 2)), 2)
    proj.point_ids = []
    with pytest.raises(ProjectionError, match="empty"):
        export_projection(proj, tmp_path / "x.tsv")
