"""Directed temporal linking of spatial tokens and tracklet aggregation.

Each token of frame t+1 may link to at most one overlapping token of frame t.
The resulting forest is resolved with pointer jumping, and every tree becomes
one merged token anchored at its earliest member.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import CycleDetected, InvalidConfig, PartitionMismatch
from .quadtree import SpatialToken, SpatialTokenSet
from .tensor import cosine_rows, grouped_weighted_sum

POLICIES = ("top_left", "optimal")


def _label_frame(tokens: Sequence[SpatialToken], height: int, width: int) -> np.ndarray:
    occupancy = np.zeros((height, width), dtype=np.int64)
    labels = np.full((height, width), -1, dtype=np.int64)
    for k, tok in enumerate(tokens):
        if tok.h < 1 or tok.w < 1 or tok.y0 < 0 or tok.x0 < 0 or tok.y0 + tok.h > height or tok.x0 + tok.w > width:
            raise PartitionMismatch(f"token {k} rectangle {tok.rect} lies outside the {height}x{width} grid")
        occupancy[tok.y0 : tok.y0 + tok.h, tok.x0 : tok.x0 + tok.w] += 1
        labels[tok.y0 : tok.y0 + tok.h, tok.x0 : tok.x0 + tok.w] = k
    if not (occupancy == 1).all():
        raise PartitionMismatch("token rectangles do not tile the frame exactly once")
    return labels


def _pairs_from_labels(src_labels: np.ndarray, dst_labels: np.ndarray, n: int) -> np.ndarray:
    codes = np.unique(src_labels.ravel() * n + dst_labels.ravel())
    return np.stack([codes // n, codes % n], axis=1)


def overlap_candidates(
    prev_tokens: Sequence[SpatialToken],
    next_tokens: Sequence[SpatialToken],
    height: int | None = None,
    width: int | None = None,
) -> np.ndarray:
    """All (src in next, dst in prev) index pairs whose rectangles share area.

    Returns an ``(K, 2)`` integer array sorted by src then dst.  Grid size is
    inferred from the rectangles when not given.
    """
    every = list(prev_tokens) + list(next_tokens)
    if height is None:
        height = max(t.y0 + t.h for t in every)
    if width is None:
        width = max(t.x0 + t.w for t in every)
    prev_labels = _label_frame(prev_tokens, height, width)
    next_labels = _label_frame(next_tokens, height, width)
    n = max(len(prev_tokens), len(next_tokens), 1)
    return _pairs_from_labels(next_labels, prev_labels, n)


def temporal_link(
    candidates: np.ndarray,
    src_features: np.ndarray,
    dst_features: np.ndarray,
    dst_corners: np.ndarray,
    tau_t: float,
    policy: str = "top_left",
) -> np.ndarray:
    """Pick at most one destination per source among the candidate pairs.

    Only pairs with cosine similarity strictly above ``tau_t`` qualify.  The
    ``top_left`` policy takes the qualifying destination with the smallest
    (y0, x0) corner; ``optimal`` takes the most similar one (ties to top-left).
    Returns an ``(E, 2)`` array of (src, dst) edges sorted by src.
    """
    if policy not in POLICIES:
        raise InvalidConfig(f"unknown destination policy {policy!r}")
    candidates = np.asarray(candidates, dtype=np.int64).reshape(-1, 2)
    if len(candidates) == 0:
        return candidates
    src, dst = candidates[:, 0], candidates[:, 1]
    sims = cosine_rows(src_features[src], dst_features[dst])
    ok = sims > tau_t
    src, dst, sims = src[ok], dst[ok], sims[ok]
    corners = np.asarray(dst_corners, dtype=np.int64)[dst]
    if policy == "top_left":
        order = np.lexsort((corners[:, 1], corners[:, 0], src))
    else:
        order = np.lexsort((corners[:, 1], corners[:, 0], -sims, src))
    src, dst = src[order], dst[order]
    first = np.ones(len(src), dtype=bool)
    first[1:] = src[1:] != src[:-1]
    return np.stack([src[first], dst[first]], axis=1)


def frame_pair_candidates(spatial: SpatialTokenSet) -> np.ndarray:
    """Candidate pairs for every consecutive frame pair, in global token ids."""
    if len(spatial.frames) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    return _pairs_from_labels(spatial.labels[1:], spatial.labels[:-1], max(len(spatial), 1))


def count_temporal_comparisons(spatial: SpatialTokenSet) -> int:
    return len(frame_pair_candidates(spatial))


@dataclass
class MergeForest:
    """Spatial tokens as nodes, each pointing at itself or one earlier-frame node."""

    frame: np.ndarray
    parent: np.ndarray
    roots: np.ndarray | None = field(default=None, repr=False)
    passes: int = 0

    @classmethod
    def from_edges(cls, frame: np.ndarray, edges: np.ndarray) -> "MergeForest":
        parent = np.arange(len(frame), dtype=np.int64)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(np.unique(edges[:, 0])) != len(edges):
            raise CycleDetected("a node has more than one outgoing edge")
        parent[edges[:, 0]] = edges[:, 1]
        return cls(np.asarray(frame, dtype=np.int64), parent)

    def validate(self) -> None:
        linked = self.parent != np.arange(len(self.parent))
        bad = linked & (self.frame[self.parent] != self.frame - 1)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise CycleDetected(
                f"edge {k}->{int(self.parent[k])} does not point exactly one frame back"
            )


def resolve_roots(forest: MergeForest) -> np.ndarray:
    """Earliest ancestor of every node, by synchronous pointer jumping.

    Each pass replaces every parent with its grandparent, so chains spanning T
    frames settle in ceil(log2 T) passes plus one pass that observes the fixpoint.
    """
    forest.validate()
    parent = forest.parent.copy()
    span = int(forest.frame.max() - forest.frame.min() + 1) if len(parent) else 1
    limit = math.ceil(math.log2(span)) + 1 if span > 1 else 1
    passes = 0
    while True:
        passes += 1
        nxt = parent[parent]
        if np.array_equal(nxt, parent):
            break
        if passes >= limit:
            raise CycleDetected("pointer jumping did not reach a fixpoint")
        parent = nxt
    forest.roots = parent
    forest.passes = passes
    return parent


@dataclass(frozen=True)
class MergedToken:
    feature: np.ndarray
    regions: list[tuple[int, int, int, int, int]]  # (t, y0, x0, h, w)
    root_frame: int
    root_rect: tuple[int, int, int, int]
    area: int


@dataclass
class MergedTokenSet:
    """Tracklets, one per distinct root, in ascending root-id order.

    ``members[member_ptr[k]:member_ptr[k+1]]`` are the spatial token ids of
    tracklet ``k`` (root first, then by frame and raster position).
    """

    spatial: SpatialTokenSet
    root: np.ndarray
    features: np.ndarray
    area: np.ndarray
    member_ptr: np.ndarray
    members: np.ndarray

    def __len__(self) -> int:
        return len(self.root)

    def __iter__(self) -> Iterator[MergedToken]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> MergedToken:
        r = int(self.root[k])
        sp = self.spatial
        return MergedToken(
            feature=self.features[k],
            regions=self.regions(k),
            root_frame=int(sp.frame[r]),
            root_rect=(int(sp.y0[r]), int(sp.x0[r]), int(sp.h[r]), int(sp.w[r])),
            area=int(self.area[k]),
        )

    @property
    def root_frame(self) -> np.ndarray:
        return self.spatial.frame[self.root]

    @property
    def root_y0(self) -> np.ndarray:
        return self.spatial.y0[self.root]

    @property
    def root_x0(self) -> np.ndarray:
        return self.spatial.x0[self.root]

    def member_ids(self, k: int) -> np.ndarray:
        return self.members[self.member_ptr[k] : self.member_ptr[k + 1]]

    def regions(self, k: int) -> list[tuple[int, int, int, int, int]]:
        sp = self.spatial
        return [
            (int(sp.frame[m]), int(sp.y0[m]), int(sp.x0[m]), int(sp.h[m]), int(sp.w[m]))
            for m in self.member_ids(k)
        ]

    def take(self, order: np.ndarray) -> "MergedTokenSet":
        """Reordered copy; tracklet membership is carried along."""
        order = np.asarray(order, dtype=np.int64)
        sizes = np.diff(self.member_ptr)[order]
        ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        shift = np.repeat(self.member_ptr[:-1][order] - ptr[:-1], sizes)
        members = self.members[np.arange(ptr[-1]) + shift]
        return MergedTokenSet(self.spatial, self.root[order], self.features[order], self.area[order], ptr, members)


def aggregate_tracklets(spatial: SpatialTokenSet, roots: np.ndarray) -> MergedTokenSet:
    """Area-weighted mean of every tracklet's member features."""
    roots = np.asarray(roots, dtype=np.int64)
    # members sorted by root, then by their own id, i.e. (frame, y0, x0)
    order = np.lexsort((np.arange(len(roots)), roots))
    sorted_roots = roots[order]
    starts = np.flatnonzero(np.r_[True, sorted_roots[1:] != sorted_roots[:-1]]) if len(roots) else np.zeros(0, np.int64)
    ptr = np.r_[starts, len(roots)].astype(np.int64)
    area = spatial.area.astype(np.float64)
    sums = grouped_weighted_sum(spatial.features, area, order, ptr)
    areas = grouped_weighted_sum(np.ones((len(roots), 1)), area, order, ptr)[:, 0]
    return MergedTokenSet(
        spatial=spatial,
        root=sorted_roots[starts],
        features=sums / areas[:, None],
        area=areas.astype(np.int64),
        member_ptr=ptr,
        members=order.astype(np.int64),
    )


def link_tokens(spatial: SpatialTokenSet, tau_t: float, policy: str = "top_left") -> tuple[MergeForest, int]:
    """Build the merge forest for all consecutive frame pairs at once.

    Returns the forest and the number of similarity evaluations performed.
    """
    candidates = frame_pair_candidates(spatial)
    corners = np.stack([spatial.y0, spatial.x0], axis=1)
    edges = temporal_link(candidates, spatial.features, spatial.features, corners, tau_t, policy)
    return MergeForest.from_edges(spatial.frame, edges), len(candidates)
