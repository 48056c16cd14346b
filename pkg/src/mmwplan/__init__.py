"""Planning toolkit for fixed millimeter-wave networks.

Pipeline: classify a LiDAR-style point cloud by neighborhood PCA, detect
pole sites, test line-of-sight between them, then pick a minimum-cost (or
budget-capped maximum-coverage) network by integer programming.
"""

from .cloud import (
    CloudParseError,
    HashedGrid,
    PointClass,
    PointCloud,
    build_grid,
    downsample,
    load_cloud,
    merge_grids,
    neighbors_within,
    save_cloud,
)
from .classify import PcaParams, PcaResult, classify_cloud, classify_point, dimensionality, local_pca

__all__ = [
    "CloudParseError",
    "HashedGrid",
    "PcaParams",
    "PcaResult",
    "PointClass",
    "PointCloud",
    "build_grid",
    "classify_cloud",
    "classify_point",
    "dimensionality",
    "downsample",
    "load_cloud",
    "local_pca",
    "merge_grids",
    "neighbors_within",
    "save_cloud",
]

__version__ = "0.1.0"
