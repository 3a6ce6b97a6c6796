"""Image -> style-space mapping (preprocess, backends, statistics, cache)."""

from .cache import read_cache, read_cache_header, write_cache  # noqa: F401
from .core import (  # noqa: F401
    compute_fingerprint,
    extract_dataset,
    extract_feature_maps,
    extract_image,
    style_vector,
)
from .preprocess import load_rgb, preprocess, resize_bilinear  # noqa: F401
from .types import (  # noqa: F401
    ExtractorConfig,
    ExtractStats,
    FeatureMap,
    StyleVector,
    StyleVectorSet,
    default_extractor_config,
)
