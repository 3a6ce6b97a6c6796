"""Exception hierarchy shared across the pipeline."""


class StyleFilterError(Exception):
    """Base class for all errors raised by this package."""


class ManifestError(StyleFilterError):
    """Manifest construction, validation, or parsing failed."""


class ConfigError(StyleFilterError):
    """Invalid configuration file or configuration value."""


class ExtractorError(StyleFilterError):
    """Feature extraction failed."""


class FingerprintMismatch(ExtractorError):
    """An existing style cache was produced by a different extractor setup."""


class ClusteringError(StyleFilterError):
    """Invalid clustering request or malformed clustering artifact."""


class FilterError(StyleFilterError):
    """Centroid filtering could not be carried out."""


class ProjectionError(StyleFilterError):
    """Invalid projection request."""


class PipelineError(StyleFilterError):
    """Stage orchestration failed (missing artifacts, locks, etc.)."""
