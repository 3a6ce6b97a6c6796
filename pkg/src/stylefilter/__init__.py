"""Style-space curation of source-domain image sets.

Maps source and target images into a shared style space (channel-wise
feature statistics), clusters each domain, clusters the cluster centroids
jointly, and drops source clusters that never share a centroid cluster
with the target domain.
"""

__version__ = "0.1.0"

from .manifest import Domain, ImageRecord, Manifest  # noqa: F401
