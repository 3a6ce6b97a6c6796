"""Centroid-of-centroids filtering.

Per-domain centroids get global labels (source first, then target), are
clustered jointly per candidate k, and source labels whose part never
contains a target label across the candidate ks are removed together with
their instances.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusteringResult, KDiagnostics, kmeans, silhouette
from .errors import FilterError
from .manifest import Domain, Manifest

MODES = ("all_k", "any_k", "single_k")


@dataclass
class LabeledCentroid:
    domain: Domain
    local_index: int
    vector: np.ndarray
    member_count: int


def compute_centroids(points: np.ndarray, result: ClusteringResult,
                      domain: Domain) -> list[LabeledCentroid]:
    """Re-derive centroids as means of the assigned (standardized) vectors."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) != len(result.assignments):
        raise FilterError(
            f"{domain.value}: clustering covers {len(result.assignments)} "
            f"points but {len(points)} style vectors were given"
        )
    out: list[LabeledCentroid] = []
    for c in range(result.k):
        members = points[result.assignments == c]
        if len(members) == 0:
            raise FilterError(f"{domain.value}: cluster {c} has no members")
        out.append(
            LabeledCentroid(
                domain=domain,
                local_index=c,
                vector=members.mean(axis=0),
                member_count=len(members),
            )
        )
    return out


@dataclass
class CentroidSet:
    """All per-domain centroids under one global labeling.

    Labels 0..k_src-1 are the source centroids, k_src..k_src+k_tgt-1 the
    target centroids, mirroring the usual reporting convention.
    """

    vectors: np.ndarray
    n_source: int
    n_target: int
    member_counts: np.ndarray

    @property
    def labels(self) -> list[int]:
        return list(range(self.n_source + self.n_target))

    @property
    def source_labels(self) -> set[int]:
        return set(range(self.n_source))

    @property
    def target_labels(self) -> set[int]:
        return set(range(self.n_source, self.n_source + self.n_target))

    def domain_of(self, label: int) -> Domain:
        if 0 <= label < self.n_source:
            return Domain.SOURCE
        if self.n_source <= label < self.n_source + self.n_target:
            return Domain.TARGET
        raise FilterError(f"label {label} out of range")


def build_centroid_set(source: list[LabeledCentroid],
                       target: list[LabeledCentroid]) -> CentroidSet:
    for group, domain in ((source, Domain.SOURCE), (target, Domain.TARGET)):
        if [c.local_index for c in group] != list(range(len(group))):
            raise FilterError(f"{domain.value} centroids must be densely indexed")
        if any(c.domain != domain for c in group):
            raise FilterError("centroid domain tags inconsistent with position")
    vectors = np.stack([c.vector for c in source + target])
    counts = np.array([c.member_count for c in source + target])
    return CentroidSet(
        vectors=vectors,
        n_source=len(source),
        n_target=len(target),
        member_counts=counts,
    )


def _canonical_partition(assignments: np.ndarray, k: int) -> list[list[int]]:
    parts = [sorted(np.flatnonzero(assignments == c).tolist()) for c in range(k)]
    return sorted((p for p in parts if p), key=lambda p: p[0])


@dataclass
class CentroidClustering:
    candidate_ks: list[int]
    groupings: dict[int, list[list[int]]]
    diagnostics: KDiagnostics


def cluster_centroids(
    cs: CentroidSet,
    candidate_ks: list[int],
    seed: int = 0,
    restarts: int = 10,
    weight_by_member_count: bool = False,
) -> CentroidClustering:
    """K-means over all centroids per candidate k, plus k diagnostics.

    Centroids are unweighted points by default; member-count weighting is
    an opt-in extension.
    """
    n = len(cs.labels)
    ks = list(candidate_ks)
    if not ks:
        raise FilterError("no candidate ks for centroid clustering")
    if ks != sorted(set(ks)):
        raise FilterError("candidate ks must be ascending and unique")
    if ks[0] < 2 or ks[-1] > n - 1:
        raise FilterError(f"candidate centroid ks must lie in [2, {n - 1}]")
    weights = cs.member_counts.astype(np.float64) if weight_by_member_count else None

    groupings: dict[int, list[list[int]]] = {}
    sse_curve: list[float] = []
    sil_curve: list[float] = []
    for k in ks:
        result = kmeans(cs.vectors, k, seed=seed, restarts=restarts,
                        weights=weights)
        groupings[k] = _canonical_partition(result.assignments, k)
        sse_curve.append(result.sse)
        mean_sil, _ = silhouette(cs.vectors, result.assignments)
        sil_curve.append(mean_sil)
    elbow_available = len(ks) >= 3
    suggested_elbow = None
    if elbow_available:
        second = [
            sse_curve[i - 1] - 2.0 * sse_curve[i] + sse_curve[i + 1]
            for i in range(1, len(ks) - 1)
        ]
        suggested_elbow = ks[1 + int(np.argmax(second))]
    diagnostics = KDiagnostics(
        candidate_ks=ks,
        sse_curve=sse_curve,
        silhouette_curve=sil_curve,
        suggested_k_elbow=suggested_elbow,
        suggested_k_silhouette=ks[int(np.argmax(sil_curve))],
        elbow_available=elbow_available,
    )
    return CentroidClustering(candidate_ks=ks, groupings=groupings,
                              diagnostics=diagnostics)


def isolated_source_labels(grouping: list[list[int]],
                           cs: CentroidSet) -> set[int]:
    """Source labels whose part contains no target label."""
    seen: set[int] = set()
    for part in grouping:
        for label in part:
            if label in seen:
                raise FilterError(f"label {label} appears in two parts")
            seen.add(label)
    expected = set(cs.labels)
    if seen != expected:
        raise FilterError(
            f"grouping is not a partition of all labels "
            f"(missing {sorted(expected - seen)}, extra {sorted(seen - expected)})"
        )
    isolated: set[int] = set()
    targets = cs.target_labels
    for part in grouping:
        if not targets.intersection(part):
            isolated.update(part)
    return isolated


def decide_removal(isolated_per_k: dict[int, set[int]], mode: str) -> set[int]:
    """Combine per-candidate isolation sets into the final removal set."""
    if mode not in MODES:
        raise FilterError(f"unknown filter mode {mode!r} (expected one of {MODES})")
    if not isolated_per_k:
        raise FilterError("no candidate ks were evaluated")
    sets = [set(s) for _, s in sorted(isolated_per_k.items())]
    if mode == "all_k":
        out = set.intersection(*sets)
    elif mode == "any_k":
        out = set.union(*sets)
    else:
        if len(sets) != 1:
            raise FilterError(
                "mode single_k expects exactly one candidate k, got "
                f"{sorted(isolated_per_k)}"
            )
        out = sets[0]
    return out


@dataclass
class FilterReport:
    candidate_ks: list[int]
    groupings: dict[int, list[list[int]]]
    isolated_per_k: dict[int, list[int]]
    mode: str
    removed_source_clusters: list[int]
    kept_count: int
    removed_count: int
    kept_ids: list[str] = field(default_factory=list, repr=False)
    removed_ids: list[str] = field(default_factory=list, repr=False)
    output_manifest_path: str = ""

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["groupings"] = {str(k): v for k, v in self.groupings.items()}
        d["isolated_per_k"] = {str(k): v for k, v in self.isolated_per_k.items()}
        return d


def apply_filter(
    source_manifest: Manifest,
    source_assignments: np.ndarray,
    removed_clusters: set[int],
    *,
    candidate_ks: list[int] | None = None,
    groupings: dict[int, list[list[int]]] | None = None,
    isolated_per_k: dict[int, set[int]] | None = None,
    mode: str = "all_k",
) -> tuple[Manifest, FilterReport]:
    """Drop records of removed source clusters, preserving record order."""
    records = source_manifest.records
    assignments = np.asarray(source_assignments)
    if len(assignments) != len(records):
        raise FilterError(
            f"assignment/manifest mismatch: {len(assignments)} assignments "
            f"for {len(records)} records (stale style cache?)"
        )
    present = set(int(a) for a in np.unique(assignments))
    stray = set(removed_clusters) - present
    if stray:
        raise FilterError(f"removal names unknown source clusters {sorted(stray)}")
    if present and present.issubset(set(removed_clusters)):
        raise FilterError(
            "filter would remove entire source domain; refusing to emit an "
            "empty manifest"
        )
    kept, removed = [], []
    for rec, cluster in zip(records, assignments):
        (removed if int(cluster) in removed_clusters else kept).append(rec)
    filtered = Manifest(
        domain=Domain.SOURCE,
        records=tuple(kept),
        created_at=source_manifest.created_at,
    )
    report = FilterReport(
        candidate_ks=list(candidate_ks or []),
        groupings={int(k): v for k, v in (groupings or {}).items()},
        isolated_per_k={int(k): sorted(v)
                        for k, v in (isolated_per_k or {}).items()},
        mode=mode,
        removed_source_clusters=sorted(removed_clusters),
        kept_count=len(kept),
        removed_count=len(removed),
        kept_ids=[r.id for r in kept],
        removed_ids=[r.id for r in removed],
    )
    return filtered, report
