"""Stage orchestration over persisted artifacts.

Every stage writes its artifact atomically plus a ``.meta.json`` sidecar
holding a content-hash signature of its inputs; a stage whose signature
is unchanged is skipped on re-runs. All randomness derives from the
config's single seed.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import (
    ClusteringResult,
    Standardizer,
    diagnose_k,
    kmeans,
    read_clustering,
    read_standardizer,
    silhouette,
    write_clustering,
    write_diagnostics,
    write_standardizer,
)
from .config import PipelineConfig
from .errors import FingerprintMismatch, PipelineError
from .extractor import (
    ExtractStats,
    StyleVectorSet,
    compute_fingerprint,
    extract_dataset,
    read_cache,
)
from .filtering import (
    apply_filter,
    build_centroid_set,
    cluster_centroids,
    compute_centroids,
    decide_removal,
    isolated_source_labels,
)
from .manifest import Domain, Manifest, read_manifest, write_manifest
from .projection import export_projection, pca_project, tsne_project
from .util import atomic_write_text, derive_seed, sha256_bytes, sha256_file

log = logging.getLogger(__name__)

DOMAINS = (Domain.SOURCE, Domain.TARGET)


@dataclass
class RunCounters:
    extractions: int = 0
    clusterings: int = 0
    cache_hits: int = 0
    stages_run: list[str] = field(default_factory=list)
    stages_skipped: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "extractions_performed": self.extractions,
            "clusterings_performed": self.clusterings,
            "cache_hits": self.cache_hits,
            "stages_run": self.stages_run,
            "stages_skipped": self.stages_skipped,
            "notes": self.notes,
        }


class OutputLock:
    """One pipeline per output directory."""

    def __init__(self, output_dir: Path):
        self.path = output_dir / ".sf.lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise PipelineError(
                f"lock file {self.path} exists: another run appears to be in "
                "progress (delete it if that run crashed)"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc_info):
        try:
            self.path.unlink()
        except OSError:
            pass
        return False


class Pipeline:
    def __init__(self, cfg: PipelineConfig):
        cfg.validate()
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.counters = RunCounters()
        self._styles: dict[Domain, StyleVectorSet] = {}
        self._standardizer: Standardizer | None = None
        self._clusterings: dict[Domain, ClusteringResult] = {}
        self._cluster_info: dict[Domain, dict] = {}
        self._fingerprint: bytes | None = None

    # -- artifact paths ----------------------------------------------------

    def manifest_path(self, domain: Domain) -> Path:
        return (self.cfg.source_manifest if domain is Domain.SOURCE
                else self.cfg.target_manifest)

    def cache_path(self, domain: Domain) -> Path:
        return self.out / f"style_{domain.value}.sfstyle"

    def diag_path(self, domain: Domain) -> Path:
        return self.out / f"kdiag_{domain.value}.tsv"

    def clustering_path(self, domain: Domain) -> Path:
        return self.out / f"clust_{domain.value}.sfclust"

    @property
    def standardizer_path(self) -> Path:
        return self.out / "standardizer.sfstd"

    @property
    def filtered_manifest_path(self) -> Path:
        return self.out / "filtered_source.manifest"

    @property
    def filter_result_path(self) -> Path:
        return self.out / "filter_result.json"

    @property
    def report_path(self) -> Path:
        return self.out / "report.json"

    def projection_path(self, what: str, method: str) -> Path:
        return self.out / f"proj_{what}_{method}.tsv"

    # -- helpers -----------------------------------------------------------

    @property
    def fingerprint(self) -> bytes:
        if self._fingerprint is None:
            self._fingerprint = compute_fingerprint(self.cfg.extractor)
        return self._fingerprint

    def _signature(self, stage: str, **parts) -> str:
        payload = {"stage": stage, "tool_version": __version__, **parts}
        return sha256_bytes(json.dumps(payload, sort_keys=True).encode())

    def _meta_path(self, artifact: Path) -> Path:
        return artifact.with_name(artifact.name + ".meta.json")

    def _fresh(self, stage: str, artifacts: list[Path], signature: str) -> bool:
        meta_path = self._meta_path(artifacts[0])
        if not all(a.exists() for a in artifacts) or not meta_path.exists():
            return False
        try:
            meta = json.loads(meta_path.read_text())
        except (OSError, json.JSONDecodeError):
            return False
        if meta.get("signature") != signature:
            return False
        self.counters.stages_skipped.append(stage)
        log.info("stage %s: inputs unchanged, skipping", stage)
        return True

    def _commit(self, stage: str, artifacts: list[Path], signature: str,
                extra: dict | None = None) -> None:
        meta = {"stage": stage, "signature": signature,
                "tool_version": __version__}
        if extra:
            meta["info"] = extra
        atomic_write_text(self._meta_path(artifacts[0]),
                          json.dumps(meta, indent=2) + "\n")
        self.counters.stages_run.append(stage)

    def _stage_info(self, artifact: Path) -> dict:
        try:
            return json.loads(self._meta_path(artifact).read_text())["info"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise PipelineError(
                f"artifact metadata for {artifact} is missing or stale; "
                "re-run the producing stage"
            ) from exc

    def load_manifest(self, domain: Domain) -> Manifest:
        path = self.manifest_path(domain)
        if not path.exists():
            raise PipelineError(
                f"missing manifest for domain {domain.value}: {path} "
                "(run 'stylefilter synth' or fix [paths])"
            )
        return read_manifest(path)

    # -- stages ------------------------------------------------------------

    def stage_extract(self, domain: Domain) -> StyleVectorSet:
        if domain in self._styles:
            return self._styles[domain]
        stage = f"extract/{domain.value}"
        manifest_file = self.manifest_path(domain)
        if not manifest_file.exists():
            raise PipelineError(
                f"missing manifest for domain {domain.value}: {manifest_file}"
            )
        self.out.mkdir(parents=True, exist_ok=True)
        cache = self.cache_path(domain)
        signature = self._signature(
            stage,
            manifest=sha256_file(manifest_file),
            fingerprint=self.fingerprint.hex(),
        )
        if self._fresh(stage, [cache], signature):
            sset = read_cache(cache)
        else:
            if cache.exists():
                from .extractor.cache import read_cache_header

                cached_fp, _, _ = read_cache_header(cache)
                if cached_fp != self.fingerprint:
                    log.info("stage %s: extractor configuration changed, "
                             "rebuilding %s", stage, cache)
                    cache.unlink()
            manifest = self.load_manifest(domain)
            stats = ExtractStats()
            sset = extract_dataset(
                manifest, self.cfg.extractor, cache,
                base_dir=manifest_file.parent, stats=stats,
            )
            self.counters.extractions += stats.extracted
            self.counters.cache_hits += stats.cache_hits
            self._commit(stage, [cache], signature,
                         {"count": len(sset.ids), "dim": sset.dim})
        self._styles[domain] = sset
        return sset

    def require_cache(self, domain: Domain) -> StyleVectorSet:
        if domain in self._styles:
            return self._styles[domain]
        cache = self.cache_path(domain)
        if not cache.exists():
            raise PipelineError(
                f"missing style cache for domain {domain.value}; "
                "run 'stylefilter extract' first"
            )
        sset = read_cache(cache)
        if sset.fingerprint != self.fingerprint:
            raise FingerprintMismatch(
                f"style cache for domain {domain.value} was built by a "
                "different extractor configuration; re-run 'stylefilter extract'"
            )
        self._styles[domain] = sset
        return sset

    def stage_standardize(self) -> Standardizer:
        if self._standardizer is not None:
            return self._standardizer
        stage = "standardize"
        src = self.require_cache(Domain.SOURCE)
        tgt = self.require_cache(Domain.TARGET)
        signature = self._signature(
            stage,
            caches=[sha256_file(self.cache_path(d)) for d in DOMAINS],
            standardize=self.cfg.clustering.standardize,
        )
        path = self.standardizer_path
        if self._fresh(stage, [path], signature):
            record = read_standardizer(path)
        else:
            if self.cfg.clustering.standardize:
                union = np.vstack([src.vectors, tgt.vectors]).astype(np.float64)
                record = Standardizer(mean=union.mean(axis=0),
                                      std=union.std(axis=0))
            else:
                record = Standardizer.identity(src.dim)
            write_standardizer(record, path)
            self._commit(stage, [path], signature)
        self._standardizer = record
        return record

    def points(self, domain: Domain) -> np.ndarray:
        return self.stage_standardize().transform(
            self.require_cache(domain).vectors
        )

    def stage_diagnose(self, domain: Domain) -> Path | None:
        stage = f"diagnose/{domain.value}"
        points = self.points(domain)
        n = len(points)
        candidates = [k for k in self.cfg.clustering.candidate_ks if 2 <= k <= n - 1]
        dropped = sorted(set(self.cfg.clustering.candidate_ks) - set(candidates))
        if dropped:
            self.counters.notes.append(
                f"{stage}: dropped infeasible candidate ks {dropped} (n={n})"
            )
        if not candidates:
            self.counters.notes.append(f"{stage}: no feasible candidate ks")
            return None
        seed = derive_seed(self.cfg.seed, "diagnose", domain.value)
        path = self.diag_path(domain)
        signature = self._signature(
            stage,
            caches=[sha256_file(self.cache_path(d)) for d in DOMAINS],
            candidates=candidates,
            restarts=self.cfg.clustering.restarts,
            max_iter=self.cfg.clustering.max_iter,
            tol=self.cfg.clustering.tol,
            standardize=self.cfg.clustering.standardize,
            seed=seed,
        )
        if not self._fresh(stage, [path], signature):
            diag = diagnose_k(points, candidates, seed=seed,
                              restarts=self.cfg.clustering.restarts,
                              max_iter=self.cfg.clustering.max_iter,
                              tol=self.cfg.clustering.tol)
            self.counters.clusterings += len(candidates)
            write_diagnostics(diag, path, label=f"domain={domain.value}")
            self._commit(stage, [path], signature, {
                "suggested_k_elbow": diag.suggested_k_elbow,
                "suggested_k_silhouette": diag.suggested_k_silhouette,
            })
        return path

    def stage_cluster(self, domain: Domain) -> ClusteringResult:
        if domain in self._clusterings:
            return self._clusterings[domain]
        stage = f"cluster/{domain.value}"
        points = self.points(domain)
        k = (self.cfg.clustering.k_source if domain is Domain.SOURCE
             else self.cfg.clustering.k_target)
        if k > len(points):
            raise PipelineError(
                f"{stage}: k={k} exceeds {len(points)} instances"
            )
        seed = derive_seed(self.cfg.seed, "cluster", domain.value)
        path = self.clustering_path(domain)
        signature = self._signature(
            stage,
            caches=[sha256_file(self.cache_path(d)) for d in DOMAINS],
            k=k,
            restarts=self.cfg.clustering.restarts,
            max_iter=self.cfg.clustering.max_iter,
            tol=self.cfg.clustering.tol,
            standardize=self.cfg.clustering.standardize,
            seed=seed,
        )
        if self._fresh(stage, [path], signature):
            result = read_clustering(path)
            info = self._stage_info(path)
        else:
            result = kmeans(points, k, seed=seed,
                            restarts=self.cfg.clustering.restarts,
                            max_iter=self.cfg.clustering.max_iter,
                            tol=self.cfg.clustering.tol)
            self.counters.clusterings += 1
            write_clustering(result, path)
            mean_sil = (silhouette(points, result.assignments)[0]
                        if k >= 2 else None)
            info = {"k": k, "seed": seed, "sse": result.sse,
                    "silhouette": mean_sil, "n": len(points)}
            self._commit(stage, [path], signature, info)
        self._clusterings[domain] = result
        self._cluster_info[domain] = info
        return result

    def require_clustering(self, domain: Domain) -> ClusteringResult:
        if domain in self._clusterings:
            return self._clusterings[domain]
        path = self.clustering_path(domain)
        if not path.exists():
            raise PipelineError(
                f"missing clustering artifact for domain {domain.value}; "
                "run 'stylefilter cluster' first"
            )
        result = read_clustering(path)
        self._clusterings[domain] = result
        self._cluster_info[domain] = self._stage_info(path)
        return result

    def _centroid_candidates(self, n_centroids: int) -> tuple[list[int], bool]:
        explicit = self.cfg.filter.centroid_candidate_ks
        if explicit is not None:
            bad = [k for k in explicit if not 2 <= k <= n_centroids - 1]
            if bad:
                raise PipelineError(
                    f"centroid candidate ks {bad} out of range "
                    f"[2, {n_centroids - 1}]"
                )
            return explicit, False
        return list(range(2, n_centroids)), True

    def stage_filter(self) -> dict:
        stage = "filter"
        source_manifest_file = self.manifest_path(Domain.SOURCE)
        if not source_manifest_file.exists():
            raise PipelineError(
                f"missing manifest for domain source: {source_manifest_file}"
            )
        src_points = self.points(Domain.SOURCE)
        tgt_points = self.points(Domain.TARGET)
        src_result = self.require_clustering(Domain.SOURCE)
        tgt_result = self.require_clustering(Domain.TARGET)
        for domain, result, pts in ((Domain.SOURCE, src_result, src_points),
                                    (Domain.TARGET, tgt_result, tgt_points)):
            if len(result.assignments) != len(pts):
                raise PipelineError(
                    f"clustering artifact for domain {domain.value} covers "
                    f"{len(result.assignments)} instances but the style cache "
                    f"has {len(pts)}; re-run 'stylefilter cluster'"
                )
        seed = derive_seed(self.cfg.seed, "filter", "centroids")
        signature = self._signature(
            stage,
            manifest=sha256_file(source_manifest_file),
            caches=[sha256_file(self.cache_path(d)) for d in DOMAINS],
            clusterings=[sha256_file(self.clustering_path(d)) for d in DOMAINS],
            candidate_ks=self.cfg.filter.centroid_candidate_ks,
            mode=self.cfg.filter.mode,
            weighting=self.cfg.filter.weight_by_member_count,
            restarts=self.cfg.clustering.restarts,
            seed=seed,
        )
        artifacts = [self.filter_result_path, self.filtered_manifest_path]
        if self._fresh(stage, artifacts, signature):
            return json.loads(self.filter_result_path.read_text())

        cs = build_centroid_set(
            compute_centroids(src_points, src_result, Domain.SOURCE),
            compute_centroids(tgt_points, tgt_result, Domain.TARGET),
        )
        candidates, auto = self._centroid_candidates(len(cs.labels))
        outcome = cluster_centroids(
            cs, candidates, seed=seed,
            restarts=self.cfg.clustering.restarts,
            weight_by_member_count=self.cfg.filter.weight_by_member_count,
        )
        self.counters.clusterings += len(candidates)
        if auto:
            ranked = sorted(
                zip(outcome.diagnostics.silhouette_curve, candidates),
                key=lambda pair: (-pair[0], pair[1]),
            )
            chosen = sorted(k for _, k in ranked[:2])
            self.counters.notes.append(
                f"filter: auto-selected centroid candidate ks {chosen} "
                "(top-2 silhouette)"
            )
        else:
            chosen = candidates
        isolated_per_k = {
            k: isolated_source_labels(outcome.groupings[k], cs) for k in chosen
        }
        removed = decide_removal(isolated_per_k, self.cfg.filter.mode)
        source_manifest = self.load_manifest(Domain.SOURCE)
        filtered, report = apply_filter(
            source_manifest,
            src_result.assignments,
            removed,
            candidate_ks=chosen,
            groupings={k: outcome.groupings[k] for k in chosen},
            isolated_per_k=isolated_per_k,
            mode=self.cfg.filter.mode,
        )
        write_manifest(filtered, self.filtered_manifest_path)
        report.output_manifest_path = str(self.filtered_manifest_path)

        diag = outcome.diagnostics
        result = report.to_dict()
        result.update({
            "auto_candidates": auto,
            "consistency_rule": {
                "all_k": "intersection over candidate ks",
                "any_k": "union over candidate ks",
                "single_k": "single configured k",
            }[self.cfg.filter.mode],
            "standardized": self.cfg.clustering.standardize,
            "weight_by_member_count": self.cfg.filter.weight_by_member_count,
            "centroid_labels": {
                "source": sorted(cs.source_labels),
                "target": sorted(cs.target_labels),
            },
            "centroid_member_counts": cs.member_counts.tolist(),
            "centroid_diagnostics": {
                "candidate_ks": diag.candidate_ks,
                "sse": diag.sse_curve,
                "silhouette": diag.silhouette_curve,
                "suggested_k_elbow": diag.suggested_k_elbow,
                "suggested_k_silhouette": diag.suggested_k_silhouette,
            },
            "domains": {
                d.value: self._cluster_info[d] for d in DOMAINS
            },
            "output_manifest": str(self.filtered_manifest_path),
        })
        atomic_write_text(self.filter_result_path,
                          json.dumps(result, indent=2) + "\n")
        self._commit(stage, artifacts, signature,
                     {"removed_source_clusters": sorted(removed)})
        return result

    def stage_project(
        self, whats: tuple[str, ...] = ("source", "target", "centroids")
    ) -> list[Path]:
        if not self.cfg.projection.enable:
            return []
        prj = self.cfg.projection
        written: list[Path] = []
        for what in whats:
            stage = f"project/{what}"
            if what == "centroids":
                src_points = self.points(Domain.SOURCE)
                tgt_points = self.points(Domain.TARGET)
                cs = build_centroid_set(
                    compute_centroids(src_points,
                                      self.require_clustering(Domain.SOURCE),
                                      Domain.SOURCE),
                    compute_centroids(tgt_points,
                                      self.require_clustering(Domain.TARGET),
                                      Domain.TARGET),
                )
                points = cs.vectors
                ids = [f"src-c{i}" if i < cs.n_source else
                       f"tgt-c{i - cs.n_source}" for i in cs.labels]
                labels = cs.labels
                domains = [cs.domain_of(i).value for i in cs.labels]
                deps = [self.clustering_path(d) for d in DOMAINS]
            else:
                domain = Domain(what)
                sset = self.require_cache(domain)
                points = self.points(domain)
                result = self.require_clustering(domain)
                ids = sset.ids
                labels = result.assignments.tolist()
                domains = [what] * len(ids)
                deps = [self.clustering_path(domain)]
            seed = derive_seed(self.cfg.seed, "project", what)
            n = len(points)
            if n > prj.subsample_cap:
                rng = np.random.default_rng(seed)
                keep = np.sort(rng.choice(n, size=prj.subsample_cap,
                                          replace=False))
                points = points[keep]
                ids = [ids[i] for i in keep]
                labels = [labels[i] for i in keep]
                domains = [domains[i] for i in keep]
                n = len(points)
            artifacts = [self.projection_path(what, m) for m in prj.methods]
            signature = self._signature(
                stage,
                deps=[sha256_file(p) for p in deps],
                caches=[sha256_file(self.cache_path(d)) for d in DOMAINS],
                methods=prj.methods,
                perplexity=prj.perplexity,
                iterations=prj.iterations,
                cap=prj.subsample_cap,
                seed=seed,
            )
            if self._fresh(stage, artifacts, signature):
                written.extend(artifacts)
                continue
            produced = []
            for method in prj.methods:
                out_path = self.projection_path(what, method)
                if method == "pca":
                    if n < 3:
                        self.counters.notes.append(
                            f"{stage}: too few points for pca"
                        )
                        continue
                    proj = pca_project(points, 2, point_ids=ids,
                                       cluster_labels=labels)
                else:
                    if n < 4 or (n - 1) / 3 <= 1.0:
                        self.counters.notes.append(
                            f"{stage}: too few points for tsne"
                        )
                        continue
                    perplexity = prj.perplexity
                    feasible = (n - 1) / 3
                    if perplexity >= feasible:
                        perplexity = max(1.0, feasible - 0.01)
                        self.counters.notes.append(
                            f"{stage}: perplexity clamped to "
                            f"{perplexity:.2f} for n={n}"
                        )
                    proj = tsne_project(points, perplexity=perplexity,
                                        iterations=prj.iterations, seed=seed,
                                        point_ids=ids, cluster_labels=labels)
                proj.domains = domains
                export_projection(proj, out_path,
                                  svg_path=out_path.with_suffix(".svg"))
                produced.append(out_path)
            if produced:
                self._commit(stage, artifacts, signature,
                             {"files": [str(p) for p in produced]})
                written.extend(produced)
        return written

    # -- report ------------------------------------------------------------

    def write_report(self, filter_result: dict) -> dict:
        report = {
            "tool": "stylefilter",
            "version": __version__,
            "config": self.cfg.to_dict(),
            "seed": self.cfg.seed,
            "extractor_fingerprint": self.fingerprint.hex(),
            "class_tags_consulted": False,
            "filter": filter_result,
            "counters": self.counters.to_dict(),
            "artifacts": {
                "style_caches": {
                    d.value: str(self.cache_path(d)) for d in DOMAINS
                },
                "clusterings": {
                    d.value: str(self.clustering_path(d)) for d in DOMAINS
                },
                "standardizer": str(self.standardizer_path),
                "filtered_manifest": str(self.filtered_manifest_path),
            },
        }
        atomic_write_text(self.report_path, json.dumps(report, indent=2) + "\n")
        return report

    def run_all(self) -> dict:
        with OutputLock(self.out):
            for domain in DOMAINS:
                self.stage_extract(domain)
            for domain in DOMAINS:
                self.stage_diagnose(domain)
            for domain in DOMAINS:
                self.stage_cluster(domain)
            filter_result = self.stage_filter()
            self.stage_project()
            return self.write_report(filter_result)
