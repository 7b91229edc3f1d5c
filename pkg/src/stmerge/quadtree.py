"""Per-frame quadtree pyramids and the coarse-to-fine granularity search.

Everything here is batched over a leading frame axis: a pyramid built for one
frame is simply a pyramid with a single entry in ``frames``.  Ragged grids are
handled by ceiling-halving, so parents on the bottom/right border own fewer
than four children.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import FrameOutOfRange, InvalidConfig
from .tensor import TokenGrid, _cosine_from_parts, row_norms

ROOT_SCALES = (2, 4)


def level_shapes(height: int, width: int, root_scale: int = 4) -> list[tuple[int, int]]:
    """Grid shape of every pyramid level, coarsest first.

    Dimensions are halved (rounding up) until neither exceeds ``root_scale``.
    """
    shapes = [(height, width)]
    while max(shapes[-1]) > root_scale:
        h, w = shapes[-1]
        shapes.append((-(-h // 2), -(-w // 2)))
    return shapes[::-1]


def spatial_cost_series(n_cells: int, n_levels: int) -> float:
    """Worst-case comparison count of a full 2x2 quadtree with ``n_levels`` subdivisions."""
    return sum(n_cells / 4**i * 4 for i in range(1, n_levels + 1))


def spatial_cost_bound(height: int, width: int) -> int:
    """Limit of :func:`spatial_cost_series` as the depth grows, rounded up."""
    return math.ceil(4 * height * width / 3)


@dataclass
class PyramidLevel:
    features: np.ndarray  # (F, h, w, C) float64, area-weighted means
    area: np.ndarray  # (h, w) leaf cells covered by each node
    scale: int  # nominal side length of a node in leaf cells

    @property
    def shape(self) -> tuple[int, int]:
        return self.area.shape  # type: ignore[return-value]


@dataclass
class QuadtreePyramid:
    frames: np.ndarray  # frame index of each batch entry
    height: int
    width: int
    root_scale: int
    levels: list[PyramidLevel]  # coarsest first; the last one is the leaf grid

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def rect(self, level: int, i: int, j: int) -> tuple[int, int, int, int]:
        s = self.levels[level].scale
        y0, x0 = i * s, j * s
        return y0, x0, min(s, self.height - y0), min(s, self.width - x0)

    def children(self, level: int, i: int, j: int) -> list[tuple[int, int]]:
        if level == self.n_levels - 1:
            return []
        h, w = self.levels[level + 1].shape
        return [(ci, cj) for ci in (2 * i, 2 * i + 1) for cj in (2 * j, 2 * j + 1) if ci < h and cj < w]


def _check_root_scale(root_scale: int) -> None:
    if root_scale not in ROOT_SCALES:
        raise InvalidConfig(f"root_scale must be one of {ROOT_SCALES}, got {root_scale}")


def _pool2x2(sums: np.ndarray) -> np.ndarray:
    """Sum non-overlapping 2x2 blocks over axes 1 and 2, zero-padding odd edges."""
    f, h, w = sums.shape[:3]
    ph, pw = h % 2, w % 2
    if ph or pw:
        pad = [(0, 0), (0, ph), (0, pw)] + [(0, 0)] * (sums.ndim - 3)
        sums = np.pad(sums, pad)
    rest = sums.shape[3:]
    return sums.reshape(f, (h + ph) // 2, 2, (w + pw) // 2, 2, *rest).sum(axis=(2, 4))


def _build_levels(data: np.ndarray, root_scale: int) -> list[PyramidLevel]:
    f, height, width, _ = data.shape
    shapes = level_shapes(height, width, root_scale)
    sums = data.astype(np.float64)
    area = np.ones((1, height, width), dtype=np.int64)
    levels = [PyramidLevel(sums, area[0], 1)]
    for k in range(1, len(shapes)):
        # pooling sums (not means) keeps every node exactly the mean of its leaves
        sums = _pool2x2(sums)
        area = _pool2x2(area)
        levels.append(PyramidLevel(sums, area[0], 2**k))
    for lvl in levels[1:]:
        lvl.features = lvl.features / lvl.area[None, :, :, None]
    return levels[::-1]


def build_pyramids(grid: TokenGrid, root_scale: int = 4, frames=None) -> QuadtreePyramid:
    """Pyramids for several frames at once (all of them by default)."""
    _check_root_scale(root_scale)
    if frames is None:
        frames = np.arange(grid.T)
    else:
        frames = np.asarray(frames, dtype=np.int64).reshape(-1)
        bad = frames[(frames < 0) | (frames >= grid.T)]
        if bad.size:
            raise FrameOutOfRange(f"frame {int(bad[0])} outside [0, {grid.T})")
    levels = _build_levels(grid.data[frames], root_scale)
    return QuadtreePyramid(frames, grid.H, grid.W, root_scale, levels)


def build_pyramid(grid: TokenGrid, frame: int, root_scale: int = 4) -> QuadtreePyramid:
    return build_pyramids(grid, root_scale, frames=[frame])


@dataclass(frozen=True)
class SpatialToken:
    frame: int
    y0: int
    x0: int
    h: int
    w: int
    level: int
    feature: np.ndarray

    @property
    def rect(self) -> tuple[int, int, int, int]:
        return self.y0, self.x0, self.h, self.w

    @property
    def area(self) -> int:
        return self.h * self.w


@dataclass
class SpatialTokenSet:
    """Surviving quadtree nodes of a batch of frames.

    Tokens are stored column-wise and sorted by (frame, y0, x0).  ``labels``
    maps every leaf cell of every frame to the id of the token covering it.
    """

    height: int
    width: int
    frames: np.ndarray  # (F,) frame index per batch entry
    frame: np.ndarray  # (N,) frame index of each token
    y0: np.ndarray
    x0: np.ndarray
    h: np.ndarray
    w: np.ndarray
    level: np.ndarray
    features: np.ndarray  # (N, C) float64
    labels: np.ndarray  # (F, H, W) token ids
    comparisons: np.ndarray  # (F,) similarity evaluations per frame

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[SpatialToken]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> SpatialToken:
        return SpatialToken(
            int(self.frame[k]), int(self.y0[k]), int(self.x0[k]),
            int(self.h[k]), int(self.w[k]), int(self.level[k]), self.features[k],
        )

    @property
    def area(self) -> np.ndarray:
        return self.h * self.w

    def counts_per_frame(self) -> np.ndarray:
        return np.array([(self.frame == t).sum() for t in self.frames], dtype=np.int64)

    def tokens_of_frame(self, t: int) -> list[SpatialToken]:
        return [self[k] for k in np.flatnonzero(self.frame == t)]

    def per_frame(self) -> list[list[SpatialToken]]:
        return [self.tokens_of_frame(int(t)) for t in self.frames]


def _child_similarity(parent: PyramidLevel, child: PyramidLevel, active: np.ndarray):
    """Cosine of each child against its parent, laid out as (F, h, 2, w, 2).

    Returns the similarities and a (h, 2, w, 2) mask of which children exist.
    """
    f, h, w, c = parent.features.shape
    ch, cw = child.shape
    cf = child.features
    if ch != 2 * h or cw != 2 * w:
        cf = np.pad(cf, [(0, 0), (0, 2 * h - ch), (0, 2 * w - cw), (0, 0)])
    cf = cf.reshape(f, h, 2, w, 2, c)
    exists = np.zeros((2 * h, 2 * w), dtype=bool)
    exists[:ch, :cw] = True
    exists = exists.reshape(h, 2, w, 2)

    pf = parent.features
    dot = np.einsum("fiajbc,fijc->fiajb", cf, pf, optimize=True)
    cn = row_norms(cf)
    pn = row_norms(pf)[:, :, None, :, None]
    check = exists[None] & active[:, :, None, :, None]
    sims = _cosine_from_parts(dot, cn, np.broadcast_to(pn, cn.shape), check)
    return sims, exists


def _expand(mask: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Copy each parent's flag onto its (up to four) children."""
    up = mask.repeat(2, axis=1).repeat(2, axis=2)
    return up[:, : shape[0], : shape[1]]


def spatial_merge(pyramid: QuadtreePyramid, tau_s: float) -> SpatialTokenSet:
    """Coarse-to-fine granularity decision over every frame of ``pyramid``.

    A reached node is kept iff every existing child has cosine similarity
    strictly above ``tau_s`` with it; otherwise its children are examined.
    Leaves are kept whenever reached.  Decisions within a level are
    independent, so each level is evaluated in one vectorized step.
    """
    levels = pyramid.levels
    nf = len(pyramid.frames)
    active = np.ones((nf, *levels[0].shape), dtype=bool)
    kept: list[np.ndarray] = []
    comparisons = np.zeros(nf, dtype=np.int64)
    for k in range(len(levels) - 1):
        parent, child = levels[k], levels[k + 1]
        sims, exists = _child_similarity(parent, child, active)
        passed = np.where(exists[None], sims > tau_s, True).all(axis=(2, 4))
        n_children = exists.sum(axis=(1, 3))
        comparisons += (active * n_children[None]).sum(axis=(1, 2))
        kept.append(active & passed)
        active = _expand(active & ~passed, child.shape)
    kept.append(active)
    return _collect_tokens(pyramid, kept, comparisons)


def _collect_tokens(pyramid: QuadtreePyramid, kept: list[np.ndarray], comparisons: np.ndarray) -> SpatialTokenSet:
    H, W = pyramid.height, pyramid.width
    cols: dict[str, list[np.ndarray]] = {k: [] for k in ("b", "i", "j", "y0", "x0", "h", "w", "level")}
    feats = []
    for k, (lvl, mask) in enumerate(zip(pyramid.levels, kept)):
        b, i, j = np.nonzero(mask)
        s = lvl.scale
        y0, x0 = i * s, j * s
        cols["b"].append(b)
        cols["i"].append(i)
        cols["j"].append(j)
        cols["y0"].append(y0)
        cols["x0"].append(x0)
        cols["h"].append(np.minimum(s, H - y0))
        cols["w"].append(np.minimum(s, W - x0))
        cols["level"].append(np.full(len(b), k, dtype=np.int64))
        feats.append(lvl.features[b, i, j])
    cat = {k: np.concatenate(v).astype(np.int64) for k, v in cols.items()}
    features = np.concatenate(feats, axis=0)
    order = np.lexsort((cat["x0"], cat["y0"], cat["b"]))
    cat = {k: v[order] for k, v in cat.items()}
    features = features[order]

    labels = np.full((len(pyramid.frames), H, W), -1, dtype=np.int64)
    ids = np.arange(len(order), dtype=np.int64)
    for k, lvl in enumerate(pyramid.levels):
        sel = cat["level"] == k
        if not sel.any():
            continue
        grid = np.full((len(pyramid.frames), *lvl.shape), -1, dtype=np.int64)
        grid[cat["b"][sel], cat["i"][sel], cat["j"][sel]] = ids[sel]
        s = lvl.scale
        up = grid.repeat(s, axis=1).repeat(s, axis=2)[:, :H, :W]
        np.copyto(labels, up, where=up >= 0)
    return SpatialTokenSet(
        height=H, width=W, frames=pyramid.frames.copy(),
        frame=pyramid.frames[cat["b"]], y0=cat["y0"], x0=cat["x0"], h=cat["h"], w=cat["w"],
        level=cat["level"], features=features, labels=labels, comparisons=comparisons,
    )


def count_spatial_comparisons(pyramid: QuadtreePyramid, tau_s: float) -> int:
    return int(spatial_merge(pyramid, tau_s).comparisons.sum())


def concat_spatial(parts: list[SpatialTokenSet]) -> SpatialTokenSet:
    """Join token sets built for consecutive frame chunks, renumbering ids."""
    if len(parts) == 1:
        return parts[0]
    offsets = np.cumsum([0] + [len(p) for p in parts[:-1]])
    return SpatialTokenSet(
        height=parts[0].height, width=parts[0].width,
        frames=np.concatenate([p.frames for p in parts]),
        frame=np.concatenate([p.frame for p in parts]),
        y0=np.concatenate([p.y0 for p in parts]),
        x0=np.concatenate([p.x0 for p in parts]),
        h=np.concatenate([p.h for p in parts]),
        w=np.concatenate([p.w for p in parts]),
        level=np.concatenate([p.level for p in parts]),
        features=np.concatenate([p.features for p in parts], axis=0),
        labels=np.concatenate([p.labels + o for p, o in zip(parts, offsets)], axis=0),
        comparisons=np.concatenate([p.comparisons for p in parts]),
    )
