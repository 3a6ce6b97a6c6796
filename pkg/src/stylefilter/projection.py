"""2-D diagnostic projections: PCA and exact t-SNE.

Both are deterministic: PCA fixes component signs by the
largest-magnitude loading, t-SNE draws its init from the caller's seed
and iterates in fixed order. Projections are diagnostics only; nothing
downstream consumes them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ProjectionError
from .util import atomic_write_text

EARLY_EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8


@dataclass
class Projection2D:
    method: str
    coords: np.ndarray
    point_ids: list[str]
    cluster_labels: list[int]
    method_params: dict = field(default_factory=dict)
    domains: list[str] | None = None


def pca_project(
    vectors: np.ndarray,
    out_dims: int = 2,
    point_ids: list[str] | None = None,
    cluster_labels: list[int] | None = None,
) -> Projection2D:
    """Project onto the top principal components of the centered data.

    Sign convention: each component's largest-magnitude loading is made
    positive, so repeated runs agree exactly.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ProjectionError("pca needs an N x D matrix with N >= 2")
    n, d = x.shape
    if out_dims > min(n - 1, d):
        raise ProjectionError(
            f"out_dims={out_dims} too large for {n} points in {d} dims"
        )
    centered = x - x.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    for row in range(vt.shape[0]):
        pivot = int(np.argmax(np.abs(vt[row])))
        if vt[row, pivot] < 0:
            vt[row] = -vt[row]
    total = float((svals**2).sum())
    ratios = (svals**2 / total if total > 0 else np.zeros_like(svals)).tolist()
    coords = centered @ vt[:out_dims].T
    return Projection2D(
        method="pca",
        coords=coords,
        point_ids=point_ids or [str(i) for i in range(n)],
        cluster_labels=cluster_labels or [0] * n,
        method_params={
            "explained_variance_ratio": ratios,
            "components": vt[:out_dims].tolist(),
        },
    )


def _conditional_affinities(sq_dists: np.ndarray, perplexity: float,
                            tol_bits: float = 1e-6,
                            max_steps: int = 100) -> np.ndarray:
    """Row-stochastic P(j|i) whose entropy matches log2(perplexity)."""
    n = sq_dists.shape[0]
    target = np.log2(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        d = np.delete(sq_dists[i], i)
        beta, beta_lo, beta_hi = 1.0, 0.0, np.inf
        row = None
        for _ in range(max_steps):
            w = np.exp(-d * beta)
            total = w.sum()
            if total <= 0:
                beta_hi = beta
                beta = (beta_lo + beta_hi) / 2
                continue
            row = w / total
            with np.errstate(divide="ignore", invalid="ignore"):
                logs = np.where(row > 0, np.log2(row), 0.0)
            entropy = float(-(row * logs).sum())
            if abs(entropy - target) < tol_bits:
                break
            if entropy > target:  # too flat -> sharpen
                beta_lo = beta
                beta = beta * 2 if beta_hi == np.inf else (beta_lo + beta_hi) / 2
            else:
                beta_hi = beta
                beta = (beta_lo + beta_hi) / 2
        if row is None:
            row = np.full(n - 1, 1.0 / (n - 1))
        p[i, np.arange(n) != i] = row
    return p


def joint_affinities(vectors: np.ndarray, perplexity: float) -> np.ndarray:
    sq = cdist(vectors, vectors, "sqeuclidean")
    cond = _conditional_affinities(sq, perplexity)
    joint = (cond + cond.T) / (2.0 * len(vectors))
    return np.maximum(joint, 1e-12)


def _q_matrix(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + cdist(coords, coords, "sqeuclidean"))
    np.fill_diagonal(num, 0.0)
    return np.maximum(num / num.sum(), 1e-12), num


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 1e-12
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


def tsne_project(
    vectors: np.ndarray,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float | None = None,
    point_ids: list[str] | None = None,
    cluster_labels: list[int] | None = None,
) -> Projection2D:
    """Exact t-SNE to 2-D: full affinity matrix, no tree approximations.

    Gaussian bandwidths are bisected per point to match the requested
    perplexity; optimization is plain gradient descent with momentum and
    an early-exaggeration phase.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        raise ProjectionError("tsne needs at least 4 points")
    if perplexity >= (n - 1) / 3:
        raise ProjectionError(
            f"perplexity {perplexity} infeasible for {n} points "
            f"(needs perplexity < {(n - 1) / 3:.2f})"
        )
    if perplexity < 1.0:
        raise ProjectionError("perplexity must be >= 1")
    lr = float(learning_rate) if learning_rate is not None else n / EARLY_EXAGGERATION

    p = joint_affinities(x, perplexity)
    rng = np.random.default_rng(seed)
    coords = rng.normal(scale=1e-4, size=(n, 2))
    q, _ = _q_matrix(coords)
    kl_initial = _kl(p, q)

    update = np.zeros_like(coords)
    for it in range(iterations):
        p_eff = p * EARLY_EXAGGERATION if it < EXAGGERATION_ITERS else p
        q, num = _q_matrix(coords)
        w = (p_eff - q) * num
        grad = 4.0 * (np.diag(w.sum(axis=1)) - w) @ coords
        momentum = MOMENTUM_EARLY if it < EXAGGERATION_ITERS else MOMENTUM_LATE
        update = momentum * update - lr * grad
        coords = coords + update
        coords = coords - coords.mean(axis=0)

    q, _ = _q_matrix(coords)
    kl_final = _kl(p, q)
    return Projection2D(
        method="tsne",
        coords=coords,
        point_ids=point_ids or [str(i) for i in range(n)],
        cluster_labels=cluster_labels or [0] * n,
        method_params={
            "perplexity": perplexity,
            "iterations": iterations,
            "seed": seed,
            "learning_rate": lr,
            "kl_initial": kl_initial,
            "kl_final": kl_final,
        },
    )


def export_projection(proj: Projection2D, path: str | Path,
                      svg_path: str | Path | None = None) -> None:
    """Write the projection as a plot-friendly TSV (and optional SVG)."""
    n = len(proj.point_ids)
    if n == 0:
        raise ProjectionError("refusing to export an empty projection")
    domains = proj.domains or [
        "source" if pid.startswith("src-") else
        "target" if pid.startswith("tgt-") else "-"
        for pid in proj.point_ids
    ]
    lines = ["id\tx\ty\tcluster\tdomain"]
    for i in range(n):
        x, y = float(proj.coords[i, 0]), float(proj.coords[i, 1])
        lines.append(
            f"{proj.point_ids[i]}\t{x!r}\t{y!r}"
            f"\t{proj.cluster_labels[i]}\t{domains[i]}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")
    if svg_path is not None:
        atomic_write_text(svg_path, _scatter_svg(proj, domains))


_PALETTE = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
    "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd",
]


def _scatter_svg(proj: Projection2D, domains: list[str],
                 size: int = 480, margin: int = 24) -> str:
    coords = proj.coords
    lo = coords.min(axis=0)
    span = np.maximum(coords.max(axis=0) - lo, 1e-12)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    inner = size - 2 * margin
    for i in range(len(coords)):
        x = margin + (coords[i, 0] - lo[0]) / span[0] * inner
        y = size - margin - (coords[i, 1] - lo[1]) / span[1] * inner
        color = _PALETTE[proj.cluster_labels[i] % len(_PALETTE)]
        shape = "3" if domains[i] == "target" else "2.2"
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{shape}" fill="{color}" '
            f'fill-opacity="0.8"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def parse_projection_table(path: str | Path) -> Projection2D:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "id\tx\ty\tcluster\tdomain":
        raise ProjectionError(f"{path}: not a projection table")
    ids, xs, ys, labels, domains = [], [], [], [], []
    for line in lines[1:]:
        pid, x, y, cluster, domain = line.split("\t")
        ids.append(pid)
        xs.append(float(x))
        ys.append(float(y))
        labels.append(int(cluster))
        domains.append(domain)
    return Projection2D(
        method="table",
        coords=np.column_stack([xs, ys]),
        point_ids=ids,
        cluster_labels=labels,
        domains=domains,
    )
