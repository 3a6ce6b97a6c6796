"""K-means in style space plus the elbow/silhouette k diagnostics.

Deterministic by construction: k-means++ restarts draw from per-restart
seeds derived from the caller's seed, assignment ties break toward the
lower cluster index, and centroid updates accumulate in point order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ClusteringError
from .util import atomic_write_text

CLUST_MAGIC = "SFCLUST"
CLUST_VERSION = "v1"


@dataclass
class Standardizer:
    """Per-dimension z-scoring record, fit once and applied to both domains."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, vectors: np.ndarray) -> np.ndarray:
        x = np.asarray(vectors, dtype=np.float64)
        live = self.std >= 1e-12
        out = np.zeros_like(x)
        out[:, live] = (x[:, live] - self.mean[live]) / self.std[live]
        return out

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(mean=np.zeros(dim), std=np.ones(dim))


def standardize(vectors: np.ndarray) -> tuple[np.ndarray, Standardizer]:
    """Z-score each dimension with the population std.

    Dimensions with std below 1e-12 are mapped to zero rather than blown
    up by the division.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ClusteringError("standardize needs an N x D matrix with N >= 2")
    record = Standardizer(mean=x.mean(axis=0), std=x.std(axis=0))
    return record.transform(x), record


@dataclass
class ClusteringResult:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    sse: float
    seed: int
    restarts: int
    iterations_run: int
    sse_histories: list[list[float]] = field(default_factory=list, repr=False)

    def validate(self, points: np.ndarray | None = None) -> None:
        present = np.unique(self.assignments)
        if len(present) != self.k or present.min() < 0 or present.max() >= self.k:
            raise ClusteringError("assignments must cover every cluster index")
        if points is not None:
            recomputed = float(
                ((points - self.centroids[self.assignments]) ** 2).sum()
            )
            scale = max(abs(recomputed), 1e-30)
            if abs(recomputed - self.sse) / scale > 1e-6:
                raise ClusteringError("stored SSE disagrees with recomputation")


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest = cdist(points, centers[:1], "sqeuclidean")[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            idx = min(idx, n - 1)
        centers[j] = points[idx]
        closest = np.minimum(
            closest, cdist(points, centers[j:j + 1], "sqeuclidean")[:, 0]
        )
    return centers


def _assign(points: np.ndarray, centers: np.ndarray,
            weights: np.ndarray) -> tuple[np.ndarray, float]:
    d2 = cdist(points, centers, "sqeuclidean")
    assign = d2.argmin(axis=1)
    sse = float((weights * d2[np.arange(len(points)), assign]).sum())
    return assign, sse


def _update_centroids(points: np.ndarray, assign: np.ndarray, k: int,
                      weights: np.ndarray) -> np.ndarray:
    dim = points.shape[1]
    sums = np.zeros((k, dim), dtype=np.float64)
    np.add.at(sums, assign, points * weights[:, None])
    counts = np.zeros(k, dtype=np.float64)
    np.add.at(counts, assign, weights)
    return sums / counts[:, None]


def _repair_empty(points: np.ndarray, assign: np.ndarray, centers: np.ndarray,
                  k: int) -> np.ndarray:
    """Give each empty cluster the point currently farthest from its centroid."""
    assign = assign.copy()
    for cluster in range(k):
        if (assign == cluster).any():
            continue
        dist = ((points - centers[assign]) ** 2).sum(axis=1)
        counts = np.bincount(assign, minlength=k)
        movable = counts[assign] > 1
        if not movable.any():
            raise ClusteringError("cannot repair empty cluster")
        dist[~movable] = -1.0
        assign[int(dist.argmax())] = cluster
    return assign


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int,
           tol: float, weights: np.ndarray):
    centers = _kmeans_pp_init(points, k, rng)
    history: list[float] = []
    assign = np.zeros(len(points), dtype=np.int64)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        assign, _ = _assign(points, centers, weights)
        assign = _repair_empty(points, assign, centers, k)
        new_centers = _update_centroids(points, assign, k, weights)
        d2 = ((points - new_centers[assign]) ** 2).sum(axis=1)
        history.append(float((weights * d2).sum()))
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    return assign, centers, history[-1], iterations, history


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 100,
    tol: float = 1e-8,
    weights: np.ndarray | None = None,
    collect_history: bool = False,
) -> ClusteringResult:
    """Best-of-restarts Lloyd's algorithm with k-means++ seeding.

    Restart r uses seed + r, so a given (points, k, seed, restarts) tuple
    always reproduces the same result.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ClusteringError("points must be an N x D matrix")
    n = points.shape[0]
    if k < 1:
        raise ClusteringError(f"k must be >= 1, got {k}")
    if k > n:
        raise ClusteringError(f"k={k} exceeds the number of points ({n})")
    if restarts < 1:
        raise ClusteringError("restarts must be >= 1")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or (w <= 0).any():
        raise ClusteringError("weights must be positive, one per point")

    best = None
    histories: list[list[float]] = []
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        assign, centers, sse, iterations, history = _lloyd(
            points, k, rng, max_iter, tol, w
        )
        if collect_history:
            histories.append(history)
        if best is None or sse < best[2]:
            best = (assign, centers, sse, iterations)
    assign, centers, sse, iterations = best
    result = ClusteringResult(
        k=k,
        assignments=assign,
        centroids=centers,
        sse=sse,
        seed=seed,
        restarts=restarts,
        iterations_run=iterations,
        sse_histories=histories,
    )
    result.validate(points if weights is None else None)
    return result


def silhouette(points: np.ndarray,
               assignments: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean silhouette and per-point scores, Euclidean distance.

    Convention: singleton clusters score 0; a == 0 with b > 0 scores 1.
    """
    points = np.asarray(points, dtype=np.float64)
    assignments = np.asarray(assignments)
    n = len(points)
    if n < 3:
        raise ClusteringError("silhouette needs at least 3 points")
    labels = np.unique(assignments)
    if len(labels) < 2:
        raise ClusteringError("silhouette undefined for k=1")
    dist = cdist(points, points)
    scores = np.zeros(n)
    counts = {lab: int((assignments == lab).sum()) for lab in labels}
    for i in range(n):
        own = assignments[i]
        if counts[own] == 1:
            scores[i] = 0.0
            continue
        same = assignments == own
        a = dist[i, same].sum() / (counts[own] - 1)
        b = min(
            dist[i, assignments == lab].mean() for lab in labels if lab != own
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean()), scores


@dataclass
class KDiagnostics:
    candidate_ks: list[int]
    sse_curve: list[float]
    silhouette_curve: list[float]
    suggested_k_elbow: int | None
    suggested_k_silhouette: int
    elbow_available: bool


def diagnose_k(
    points: np.ndarray,
    candidate_ks: list[int],
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> KDiagnostics:
    """SSE and silhouette curves over candidate ks, with advisory picks.

    The elbow pick is the interior candidate maximizing the discrete second
    difference of the SSE curve; with fewer than 3 candidates it is flagged
    absent. Both suggestions are advisory; the pipeline's k comes from
    configuration.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    ks = list(candidate_ks)
    if ks != sorted(set(ks)):
        raise ClusteringError("candidate ks must be ascending and unique")
    if not ks or ks[0] < 2 or ks[-1] > n - 1:
        raise ClusteringError(f"candidate ks must lie in [2, {n - 1}]")
    sse_curve: list[float] = []
    sil_curve: list[float] = []
    for k in ks:
        result = kmeans(points, k, seed=seed, restarts=restarts,
                        max_iter=max_iter, tol=tol)
        sse_curve.append(result.sse)
        mean_sil, _ = silhouette(points, result.assignments)
        sil_curve.append(mean_sil)
    elbow_available = len(ks) >= 3
    suggested_elbow = None
    if elbow_available:
        second = [
            sse_curve[i - 1] - 2.0 * sse_curve[i] + sse_curve[i + 1]
            for i in range(1, len(ks) - 1)
        ]
        suggested_elbow = ks[1 + int(np.argmax(second))]
    suggested_sil = ks[int(np.argmax(sil_curve))]
    return KDiagnostics(
        candidate_ks=ks,
        sse_curve=sse_curve,
        silhouette_curve=sil_curve,
        suggested_k_elbow=suggested_elbow,
        suggested_k_silhouette=suggested_sil,
        elbow_available=elbow_available,
    )


# ---------------------------------------------------------------------------
# artifact files

def write_clustering(result: ClusteringResult, path: str | Path) -> None:
    lines = [
        f"{CLUST_MAGIC} {CLUST_VERSION}",
        f"k={result.k}",
        f"seed={result.seed}",
        f"restarts={result.restarts}",
        f"iterations_run={result.iterations_run}",
        f"sse={result.sse!r}",
        f"n={len(result.assignments)}",
        f"dim={result.centroids.shape[1]}",
    ]
    for row in result.centroids:
        lines.append("centroid\t" + " ".join(repr(float(v)) for v in row))
    lines.append("assignments\t" + " ".join(str(int(a)) for a in result.assignments))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_clustering(path: str | Path) -> ClusteringResult:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != f"{CLUST_MAGIC} {CLUST_VERSION}":
        raise ClusteringError(f"{path}: not a {CLUST_MAGIC} {CLUST_VERSION} file")
    meta: dict[str, str] = {}
    centroids: list[list[float]] = []
    assignments: np.ndarray | None = None
    for line in lines[1:]:
        if line.startswith("centroid\t"):
            centroids.append([float(v) for v in line.split("\t", 1)[1].split()])
        elif line.startswith("assignments\t"):
            assignments = np.array(
                [int(v) for v in line.split("\t", 1)[1].split()], dtype=np.int64
            )
        elif "=" in line:
            key, _, value = line.partition("=")
            meta[key] = value
    try:
        result = ClusteringResult(
            k=int(meta["k"]),
            assignments=assignments,
            centroids=np.array(centroids, dtype=np.float64),
            sse=float(meta["sse"]),
            seed=int(meta["seed"]),
            restarts=int(meta["restarts"]),
            iterations_run=int(meta["iterations_run"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ClusteringError(f"{path}: malformed clustering file: {exc}") from exc
    if len(result.centroids) != result.k or assignments is None:
        raise ClusteringError(f"{path}: malformed clustering file")
    if int(meta.get("n", len(assignments))) != len(assignments):
        raise ClusteringError(f"{path}: assignment count mismatch")
    result.validate()
    return result


def write_diagnostics(diag: KDiagnostics, path: str | Path,
                      label: str = "") -> None:
    """Plot-friendly TSV: one k column per metric block, values alongside."""
    header = [
        "# SFKDIAG v1" + (f" {label}" if label else ""),
        "# suggested_k_elbow="
        + (str(diag.suggested_k_elbow) if diag.elbow_available else "unavailable"),
        f"# suggested_k_silhouette={diag.suggested_k_silhouette}",
        "k\tsse\tsilhouette",
    ]
    rows = [
        f"{k}\t{sse!r}\t{sil!r}"
        for k, sse, sil in zip(diag.candidate_ks, diag.sse_curve,
                               diag.silhouette_curve)
    ]
    atomic_write_text(path, "\n".join(header + rows) + "\n")


def write_standardizer(record: Standardizer, path: str | Path) -> None:
    lines = [
        "SFSTD v1",
        f"dim={len(record.mean)}",
        "mean\t" + " ".join(repr(float(v)) for v in record.mean),
        "std\t" + " ".join(repr(float(v)) for v in record.std),
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_standardizer(path: str | Path) -> Standardizer:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "SFSTD v1":
        raise ClusteringError(f"{path}: not a SFSTD v1 file")
    mean = std = None
    for line in lines[1:]:
        if line.startswith("mean\t"):
            mean = np.array([float(v) for v in line.split("\t", 1)[1].split()])
        elif line.startswith("std\t"):
            std = np.array([float(v) for v in line.split("\t", 1)[1].split()])
    if mean is None or std is None or len(mean) != len(std):
        raise ClusteringError(f"{path}: malformed standardizer file")
    return Standardizer(mean=mean, std=std)
