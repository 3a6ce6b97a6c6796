"""Data types for the style extractor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ExtractorError

VALID_BACKENDS = ("onnx", "filterbank")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

DEFAULT_ONNX_TAPS = ("tap0", "tap1", "tap2", "tap3", "tap4")
DEFAULT_FILTERBANK_TAPS = ("octave0", "octave1", "octave2")


@dataclass
class FeatureMap:
    """Raw activations of one tap: C x H x W."""

    layer_index: int
    values: np.ndarray

    @property
    def channels(self) -> int:
        return self.values.shape[0]


@dataclass
class StyleVector:
    image_id: str
    values: np.ndarray
    extractor_fingerprint: bytes = b""


@dataclass
class StyleVectorSet:
    """All style vectors of one manifest, in manifest order."""

    fingerprint: bytes
    ids: list[str]
    vectors: np.ndarray  # N x D float32

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise ExtractorError("style vector set shape does not match ids")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class ExtractorConfig:
    backend: str = "filterbank"
    tap_layers: tuple[str, ...] = DEFAULT_FILTERBANK_TAPS
    input_size: tuple[int, int] = (224, 224)
    norm_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    norm_std: tuple[float, float, float] = (0.5, 0.5, 0.5)
    asset_path: str | None = None

    def validate(self) -> None:
        if self.backend not in VALID_BACKENDS:
            raise ExtractorError(f"unknown backend {self.backend!r}")
        if not self.tap_layers:
            raise ExtractorError("tap_layers must be non-empty")
        if self.input_size[0] < 32 or self.input_size[1] < 32:
            raise ExtractorError("input_size must be at least 32x32")
        if any(s <= 0 for s in self.norm_std):
            raise ExtractorError("normalization std must be positive")
        if self.backend == "onnx" and not self.asset_path:
            raise ExtractorError("onnx backend requires asset_path")


def default_extractor_config(backend: str = "filterbank",
                             asset_path: str | None = None) -> ExtractorConfig:
    if backend == "onnx":
        return ExtractorConfig(
            backend="onnx",
            tap_layers=DEFAULT_ONNX_TAPS,
            input_size=(224, 224),
            norm_mean=IMAGENET_MEAN,
            norm_std=IMAGENET_STD,
            asset_path=asset_path,
        )
    return ExtractorConfig()


@dataclass
class ExtractStats:
    """Counters surfaced in the run report."""

    extracted: int = 0
    cache_hits: int = 0
    cache_invalidated: str = ""
    rejected: list[tuple[str, str]] = field(default_factory=list)
