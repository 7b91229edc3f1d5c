"""Training-free spatio-temporal token merging for video token grids."""

from .errors import *  # noqa: F401,F403
from .ordering import OrderedOutput, assign_positions, reorder
from .pipeline import MergeConfig, MergeResult, merge_video
from .quadtree import (
    QuadtreePyramid,
    SpatialToken,
    SpatialTokenSet,
    build_pyramid,
    build_pyramids,
    count_spatial_comparisons,
    spatial_merge,
)
from .temporal import (
    MergedToken,
    MergedTokenSet,
    MergeForest,
    aggregate_tracklets,
    count_temporal_comparisons,
    overlap_candidates,
    resolve_roots,
    temporal_link,
)
from .tensor import TokenGrid, area_weighted_pool, cosine_similarity

__version__ = "0.1.0"
