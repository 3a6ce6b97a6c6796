"""Style extraction: feature maps -> channel statistics -> cached vectors."""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path

import numpy as np

from ..errors import ExtractorError, FingerprintMismatch
from ..manifest import Manifest
from ..util import sha256_file
from . import filterbank
from .cache import read_cache, read_cache_header, write_cache
from .preprocess import load_rgb, preprocess
from .types import ExtractorConfig, ExtractStats, FeatureMap, StyleVector, StyleVectorSet

log = logging.getLogger(__name__)


def compute_fingerprint(cfg: ExtractorConfig) -> bytes:
    """32-byte hash binding vectors to backend, taps, preprocessing, asset."""
    cfg.validate()
    if cfg.backend == "onnx":
        asset_id = sha256_file(cfg.asset_path)
    else:
        asset_id = filterbank.BANK_VERSION
    canonical = ";".join(
        [
            f"backend={cfg.backend}",
            "taps=" + ",".join(cfg.tap_layers),
            f"input={cfg.input_size[0]}x{cfg.input_size[1]}",
            "mean=" + ",".join(repr(float(v)) for v in cfg.norm_mean),
            "std=" + ",".join(repr(float(v)) for v in cfg.norm_std),
            f"asset={asset_id}",
        ]
    )
    return hashlib.sha256(canonical.encode("utf-8")).digest()


def style_vector(maps: list[FeatureMap], image_id: str,
                 fingerprint: bytes = b"") -> StyleVector:
    """Fuse per-channel mean and population variance of each map.

    Per layer the layout is [mu_1..mu_C, var_1..var_C]; layers are
    concatenated in depth order.
    """
    if not maps:
        raise ExtractorError("no feature maps to fuse")
    depths = [m.layer_index for m in maps]
    if depths != sorted(depths):
        raise ExtractorError("feature maps must be depth-ordered")
    pieces: list[np.ndarray] = []
    for fmap in maps:
        values = fmap.values
        if values.ndim != 3:
            raise ExtractorError(
                f"layer {fmap.layer_index}: expected C x H x W activations"
            )
        finite = np.isfinite(values).all(axis=(1, 2))
        if not finite.all():
            channel = int(np.argmin(finite))
            raise ExtractorError(
                f"non-finite activation at layer {fmap.layer_index}, "
                f"channel {channel} (image {image_id!r})"
            )
        flat = values.reshape(values.shape[0], -1)
        means = flat.mean(axis=1, dtype=np.float64)
        variances = flat.var(axis=1, dtype=np.float64)
        pieces.append(np.concatenate([means, variances]))
    vec = np.concatenate(pieces).astype(np.float32)
    return StyleVector(image_id=image_id, values=vec,
                       extractor_fingerprint=fingerprint)


def extract_feature_maps(tensor: np.ndarray, cfg: ExtractorConfig,
                         backend=None) -> list[FeatureMap]:
    """Dispatch one preprocessed 3 x H x W tensor to the configured backend."""
    cfg.validate()
    if cfg.backend == "filterbank":
        return filterbank.extract_feature_maps(tensor, list(cfg.tap_layers))
    if backend is None:
        from .onnx_backend import OnnxFeatureExtractor

        backend = OnnxFeatureExtractor(cfg)
    return backend.extract(tensor)


def extract_image(path: str | Path, cfg: ExtractorConfig, image_id: str,
                  fingerprint: bytes, backend=None) -> StyleVector:
    image = load_rgb(path)
    tensor = preprocess(image, cfg.input_size, cfg.norm_mean, cfg.norm_std)
    maps = extract_feature_maps(tensor, cfg, backend=backend)
    return style_vector(maps, image_id, fingerprint)


def extract_dataset(
    manifest: Manifest,
    cfg: ExtractorConfig,
    cache_path: str | Path,
    *,
    base_dir: str | Path,
    stats: ExtractStats | None = None,
) -> StyleVectorSet:
    """One style vector per manifest record, cached on disk.

    A pre-existing cache is reused when its fingerprint matches and it
    covers exactly this manifest's ids in order; a fingerprint mismatch is
    an error rather than a silent recompute.
    """
    stats = stats if stats is not None else ExtractStats()
    cache_path = Path(cache_path)
    base_dir = Path(base_dir)
    fingerprint = compute_fingerprint(cfg)

    if cache_path.exists():
        cached_fp, count, _dim = read_cache_header(cache_path)
        if cached_fp != fingerprint:
            raise FingerprintMismatch(
                f"style cache {cache_path} was built by a different extractor "
                "configuration; recompute it (delete the cache) or point the "
                "config at a new cache path"
            )
        cached = read_cache(cache_path)
        if cached.ids == manifest.ids:
            stats.cache_hits += count
            log.info("style cache hit: %s (%d vectors)", cache_path, count)
            return cached
        stats.cache_invalidated = "id-mismatch"
        log.info("style cache %s covers different records; recomputing",
                 cache_path)

    backend = None
    if cfg.backend == "onnx":
        from .onnx_backend import OnnxFeatureExtractor

        backend = OnnxFeatureExtractor(cfg)

    vectors: list[np.ndarray] = []
    failures: list[tuple[str, str]] = []
    dim = -1
    for rec in manifest.records:
        try:
            sv = extract_image(base_dir / rec.path, cfg, rec.id, fingerprint,
                               backend=backend)
        except ExtractorError as exc:
            failures.append((rec.id, str(exc)))
            continue
        if dim == -1:
            dim = sv.values.shape[0]
        elif sv.values.shape[0] != dim:
            raise ExtractorError(
                f"dimension drift: {rec.id} produced {sv.values.shape[0]}, "
                f"expected {dim}"
            )
        vectors.append(sv.values)
    if failures:
        stats.rejected = failures
        detail = "; ".join(f"{rid}: {msg}" for rid, msg in failures[:5])
        more = "" if len(failures) <= 5 else f" (+{len(failures) - 5} more)"
        raise ExtractorError(
            f"{len(failures)} image(s) failed extraction: {detail}{more}"
        )
    sset = StyleVectorSet(
        fingerprint=fingerprint,
        ids=manifest.ids,
        vectors=np.stack(vectors).astype(np.float32),
    )
    write_cache(cache_path, sset)
    stats.extracted += len(vectors)
    return sset
