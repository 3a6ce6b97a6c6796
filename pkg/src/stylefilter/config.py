"""Pipeline configuration: one sectioned key-value file, strict keys.

Every key has a default; unknown sections or keys are errors so a
misspelled tuning knob cannot silently alter the filtering outcome.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .extractor.types import (
    DEFAULT_FILTERBANK_TAPS,
    DEFAULT_ONNX_TAPS,
    IMAGENET_MEAN,
    IMAGENET_STD,
    ExtractorConfig,
)
from .filtering import MODES

log = logging.getLogger(__name__)

_SECTION_KEYS = {
    "paths": {"source_manifest", "target_manifest", "output_dir"},
    "extractor": {"backend", "taps", "input_size", "norm_mean", "norm_std",
                  "asset_path"},
    "clustering": {"k_source", "k_target", "restarts", "max_iter", "tol",
                   "standardize", "candidate_ks"},
    "filter": {"centroid_candidate_ks", "mode", "weight_by_member_count"},
    "projection": {"enable", "methods", "perplexity", "iterations",
                   "subsample_cap"},
    "run": {"seed", "threads"},
}


@dataclass
class ClusteringParams:
    k_source: int = 7
    k_target: int = 3
    restarts: int = 10
    max_iter: int = 100
    tol: float = 1e-8
    standardize: bool = True
    candidate_ks: list[int] = field(default_factory=lambda: list(range(2, 11)))


@dataclass
class FilterParams:
    centroid_candidate_ks: list[int] | None = None  # None -> auto (top-2 silhouette)
    mode: str = "all_k"
    weight_by_member_count: bool = False


@dataclass
class ProjectionParams:
    enable: bool = True
    methods: list[str] = field(default_factory=lambda: ["pca", "tsne"])
    perplexity: float = 30.0
    iterations: int = 1000
    subsample_cap: int = 5000


@dataclass
class PipelineConfig:
    source_manifest: Path
    target_manifest: Path
    output_dir: Path
    extractor: ExtractorConfig
    clustering: ClusteringParams = field(default_factory=ClusteringParams)
    filter: FilterParams = field(default_factory=FilterParams)
    projection: ProjectionParams = field(default_factory=ProjectionParams)
    seed: int = 0
    threads: int = 1

    def validate(self) -> None:
        self.extractor.validate()
        c = self.clustering
        if c.k_source < 1 or c.k_target < 1:
            raise ConfigError("k_source and k_target must be >= 1")
        if c.k_source < c.k_target:
            log.warning(
                "k_source (%d) < k_target (%d): a finer source clustering is "
                "recommended for filtering granularity", c.k_source, c.k_target
            )
        if c.restarts < 1 or c.max_iter < 1:
            raise ConfigError("restarts and max_iter must be >= 1")
        if self.filter.mode not in MODES:
            raise ConfigError(
                f"filter mode must be one of {MODES}, got {self.filter.mode!r}"
            )
        if (self.filter.mode == "single_k"
                and self.filter.centroid_candidate_ks is not None
                and len(self.filter.centroid_candidate_ks) != 1):
            raise ConfigError("mode single_k needs exactly one centroid candidate k")
        for m in self.projection.methods:
            if m not in ("pca", "tsne"):
                raise ConfigError(f"unknown projection method {m!r}")
        if self.projection.subsample_cap < 10:
            raise ConfigError("subsample_cap must be >= 10")

    def to_dict(self) -> dict:
        return {
            "paths": {
                "source_manifest": str(self.source_manifest),
                "target_manifest": str(self.target_manifest),
                "output_dir": str(self.output_dir),
            },
            "extractor": {
                "backend": self.extractor.backend,
                "taps": list(self.extractor.tap_layers),
                "input_size": list(self.extractor.input_size),
                "norm_mean": list(self.extractor.norm_mean),
                "norm_std": list(self.extractor.norm_std),
                "asset_path": self.extractor.asset_path or "",
            },
            "clustering": {
                "k_source": self.clustering.k_source,
                "k_target": self.clustering.k_target,
                "restarts": self.clustering.restarts,
                "max_iter": self.clustering.max_iter,
                "tol": self.clustering.tol,
                "standardize": self.clustering.standardize,
                "candidate_ks": self.clustering.candidate_ks,
            },
            "filter": {
                "centroid_candidate_ks": self.filter.centroid_candidate_ks,
                "mode": self.filter.mode,
                "weight_by_member_count": self.filter.weight_by_member_count,
            },
            "projection": {
                "enable": self.projection.enable,
                "methods": self.projection.methods,
                "perplexity": self.projection.perplexity,
                "iterations": self.projection.iterations,
                "subsample_cap": self.projection.subsample_cap,
            },
            "run": {"seed": self.seed, "threads": self.threads},
        }


def _parse_int_list(raw: str, what: str) -> list[int]:
    raw = raw.strip()
    try:
        if "-" in raw and "," not in raw:
            lo, hi = raw.split("-")
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad {what}: {raw!r}") from exc
    if values != sorted(set(values)):
        raise ConfigError(f"{what} must be ascending and unique: {raw!r}")
    return values


def _parse_size(raw: str) -> tuple[int, int]:
    raw = raw.strip().lower()
    try:
        if "x" in raw:
            h, w = raw.split("x")
            return int(h), int(w)
        side = int(raw)
        return side, side
    except ValueError as exc:
        raise ConfigError(f"bad input_size: {raw!r}") from exc


def _parse_triple(raw: str, what: str) -> tuple[float, float, float]:
    parts = [p for p in raw.split(",") if p.strip()]
    if len(parts) != 3:
        raise ConfigError(f"{what} needs three comma-separated values: {raw!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise ConfigError(f"bad {what}: {raw!r}") from exc


def _getbool(section, key, default: bool) -> bool:
    try:
        return section.getboolean(key, default)
    except ValueError as exc:
        raise ConfigError(f"bad boolean for {key}: {exc}") from exc


def load_config(path: str | Path, *, seed_override: int | None = None,
                threads_override: int | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        unknown = set(parser[section]) - _SECTION_KEYS[section]
        if unknown:
            raise ConfigError(
                f"{path}: unknown key(s) {sorted(unknown)} in [{section}]"
            )

    def section(name):
        return parser[name] if name in parser else parser["DEFAULT"]

    paths = section("paths")
    for required in ("source_manifest", "target_manifest", "output_dir"):
        if not paths.get(required, ""):
            raise ConfigError(f"{path}: [paths] must set {required}")
    base = Path(path).resolve().parent

    def respath(raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else base / p

    ext = section("extractor")
    backend = ext.get("backend", "filterbank")
    default_taps = DEFAULT_ONNX_TAPS if backend == "onnx" else DEFAULT_FILTERBANK_TAPS
    default_mean = IMAGENET_MEAN if backend == "onnx" else (0.5, 0.5, 0.5)
    default_std = IMAGENET_STD if backend == "onnx" else (0.5, 0.5, 0.5)
    taps_raw = ext.get("taps", "")
    asset_raw = ext.get("asset_path", "")
    try:
        extractor = ExtractorConfig(
            backend=backend,
            tap_layers=tuple(
                t.strip() for t in taps_raw.split(",") if t.strip()
            ) or default_taps,
            input_size=_parse_size(ext.get("input_size", "224")),
            norm_mean=(_parse_triple(ext["norm_mean"], "norm_mean")
                       if "norm_mean" in ext else default_mean),
            norm_std=(_parse_triple(ext["norm_std"], "norm_std")
                      if "norm_std" in ext else default_std),
            asset_path=str(respath(asset_raw)) if asset_raw else None,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: bad extractor value: {exc}") from exc

    clu = section("clustering")
    try:
        clustering = ClusteringParams(
            k_source=clu.getint("k_source", 7),
            k_target=clu.getint("k_target", 3),
            restarts=clu.getint("restarts", 10),
            max_iter=clu.getint("max_iter", 100),
            tol=clu.getfloat("tol", 1e-8),
            standardize=_getbool(clu, "standardize", True),
            candidate_ks=_parse_int_list(clu.get("candidate_ks", "2-10"),
                                         "candidate_ks"),
        )
        flt_sec = section("filter")
        ks_raw = flt_sec.get("centroid_candidate_ks", "auto").strip()
        flt = FilterParams(
            centroid_candidate_ks=(None if ks_raw == "auto"
                                   else _parse_int_list(ks_raw,
                                                        "centroid_candidate_ks")),
            mode=flt_sec.get("mode", "all_k"),
            weight_by_member_count=_getbool(flt_sec, "weight_by_member_count",
                                            False),
        )
        prj = section("projection")
        projection = ProjectionParams(
            enable=_getbool(prj, "enable", True),
            methods=[m.strip() for m in prj.get("methods", "pca,tsne").split(",")
                     if m.strip()],
            perplexity=prj.getfloat("perplexity", 30.0),
            iterations=prj.getint("iterations", 1000),
            subsample_cap=prj.getint("subsample_cap", 5000),
        )
        run = section("run")
        cfg = PipelineConfig(
            source_manifest=respath(paths["source_manifest"]),
            target_manifest=respath(paths["target_manifest"]),
            output_dir=respath(paths["output_dir"]),
            extractor=extractor,
            clustering=clustering,
            filter=flt,
            projection=projection,
            seed=run.getint("seed", 0),
            threads=run.getint("threads", 1),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: bad value: {exc}") from exc
    if seed_override is not None:
        cfg.seed = seed_override
    if threads_override is not None:
        cfg.threads = threads_override
    cfg.validate()
    return cfg


def write_default_config(path: str | Path, *, source_manifest: str,
                         target_manifest: str, output_dir: str,
                         backend: str = "filterbank",
                         extra: dict[str, dict[str, str]] | None = None) -> None:
    """Emit a config with every key spelled out at its default."""
    sections: dict[str, dict[str, str]] = {
        "paths": {
            "source_manifest": source_manifest,
            "target_manifest": target_manifest,
            "output_dir": output_dir,
        },
        "extractor": {
            "backend": backend,
            "taps": ",".join(DEFAULT_ONNX_TAPS if backend == "onnx"
                             else DEFAULT_FILTERBANK_TAPS),
            "input_size": "224",
        },
        "clustering": {
            "k_source": "7", "k_target": "3", "restarts": "10",
            "max_iter": "100", "tol": "1e-8", "standardize": "true",
            "candidate_ks": "2-10",
        },
        "filter": {
            "centroid_candidate_ks": "auto", "mode": "all_k",
            "weight_by_member_count": "false",
        },
        "projection": {
            "enable": "true", "methods": "pca,tsne", "perplexity": "30",
            "iterations": "1000", "subsample_cap": "5000",
        },
        "run": {"seed": "0", "threads": "1"},
    }
    for sec, kv in (extra or {}).items():
        sections.setdefault(sec, {}).update(kv)
    lines = []
    for sec, kv in sections.items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in kv.items()]
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")
