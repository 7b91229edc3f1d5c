"""End-to-end merge: spatial search, temporal linking, reordering."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .ordering import STRATEGIES, OrderedOutput, reorder
from .quadtree import ROOT_SCALES, SpatialTokenSet, build_pyramids, concat_spatial, spatial_merge
from .temporal import POLICIES, MergeForest, aggregate_tracklets, link_tokens, resolve_roots
from .tensor import TokenGrid

THREADS_ENV = "STMERGE_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InvalidConfig(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise InvalidConfig(f"{THREADS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass
class MergeConfig:
    tau_s: float = 0.80
    tau_t: float = 0.90
    root_scale: int = 4
    policy: str = "top_left"
    position: str = "reassigned"
    threads: int | None = None

    def __post_init__(self):
        for name in ("tau_s", "tau_t"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1], got {v}")
        if self.root_scale not in ROOT_SCALES:
            raise InvalidConfig(f"root_scale must be one of {ROOT_SCALES}, got {self.root_scale}")
        if self.policy not in POLICIES:
            raise InvalidConfig(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.position not in STRATEGIES:
            raise InvalidConfig(f"position must be one of {STRATEGIES}, got {self.position!r}")
        if self.threads is not None and self.threads < 1:
            raise InvalidConfig("threads must be >= 1")


@dataclass
class MergeResult:
    config: MergeConfig
    grid_shape: tuple[int, int, int, int]
    spatial: SpatialTokenSet
    forest: MergeForest
    output: OrderedOutput
    spatial_comparisons: int
    temporal_comparisons: int
    wall_time_ms: float

    @property
    def n_input_tokens(self) -> int:
        T, H, W, _ = self.grid_shape
        return T * H * W

    @property
    def n_output_tokens(self) -> int:
        return len(self.output)

    @property
    def retention_ratio(self) -> float:
        return self.n_output_tokens / self.n_input_tokens

    def output_features(self) -> np.ndarray:
        """Merged features in sequence order, as stored on disk (float32)."""
        return self.output.tokens.features.astype(np.float32)


def spatial_stage(grid: TokenGrid, tau_s: float, root_scale: int = 4, threads: int = 1) -> SpatialTokenSet:
    """Spatial merging of every frame, optionally split into frame chunks across threads.

    Chunks are concatenated in frame order, so the result does not depend on
    the thread count.
    """
    threads = max(1, min(threads, grid.T))
    chunks = [c for c in np.array_split(np.arange(grid.T), threads) if len(c)]

    def run(frames):
        return spatial_merge(build_pyramids(grid, root_scale, frames), tau_s)

    if len(chunks) == 1:
        return run(chunks[0])
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(run, chunks))
    return concat_spatial(parts)


def temporal_stage(spatial: SpatialTokenSet, tau_t: float, policy: str = "top_left"):
    forest, comparisons = link_tokens(spatial, tau_t, policy)
    roots = resolve_roots(forest)
    return forest, aggregate_tracklets(spatial, roots), comparisons


def merge_video(grid: TokenGrid, config: MergeConfig | None = None) -> MergeResult:
    config = config or MergeConfig()
    threads = config.threads or default_threads()
    start = time.perf_counter()
    spatial = spatial_stage(grid, config.tau_s, config.root_scale, threads)
    forest, merged, temporal_cmp = temporal_stage(spatial, config.tau_t, config.policy)
    output = reorder(merged)
    elapsed = (time.perf_counter() - start) * 1000.0
    return MergeResult(
        config=config,
        grid_shape=grid.shape,
        spatial=spatial,
        forest=forest,
        output=output,
        spatial_comparisons=int(spatial.comparisons.sum()),
        temporal_comparisons=temporal_cmp,
        wall_time_ms=elapsed,
    )


def retained_count(spatial: SpatialTokenSet, tau_t: float, policy: str = "top_left") -> int:
    """Number of merged tokens without aggregating features.

    The forest has one outgoing edge per linked node, so the tracklet count is
    nodes minus edges.
    """
    forest, _ = link_tokens(spatial, tau_t, policy)
    return len(spatial) - int((forest.parent != np.arange(len(forest.parent))).sum())
