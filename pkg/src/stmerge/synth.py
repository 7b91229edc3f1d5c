"""Synthetic token videos with known redundancy.

Base features are random unit vectors.  ``planted_redundancy`` is the
fraction of the T*H*W cells whose feature exactly repeats the same cell of the
previous frame; it is computed from the scenario parameters, not by scanning
the generated tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .tensor import TokenGrid

SCENARIOS = ("static", "scene_cut", "moving_block", "needle", "noise", "mixed")


@dataclass
class SynthSpec:
    T: int
    H: int
    W: int
    C: int
    scenario: str = "static"
    seed: int = 0
    cut_frames: tuple[int, ...] = ()
    block_size: int = 2
    block_start: tuple[int, int] = (0, 0)
    velocity: tuple[int, int] = (0, 1)
    needle_frame: int = 0
    needle_rect: tuple[int, int, int, int] = (0, 0, 1, 1)  # y0, x0, h, w
    needle_feature: np.ndarray | None = field(default=None, repr=False)
    redundancy: float = 0.5  # mixed: share of cells copied from the previous frame

    def validate(self) -> None:
        if min(self.T, self.H, self.W, self.C) < 1:
            raise InvalidSpec("all dimensions must be >= 1")
        if self.scenario not in SCENARIOS:
            raise InvalidSpec(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must fit in 64 bits")
        if self.scenario == "scene_cut":
            cuts = list(self.cut_frames)
            if any(b <= a for a, b in zip(cuts, cuts[1:])):
                raise InvalidSpec("cut frames must be strictly increasing")
            if cuts and (cuts[0] < 1 or cuts[-1] >= self.T):
                raise InvalidSpec("cut frames must lie in [1, T)")
        if self.scenario == "needle":
            y0, x0, h, w = self.needle_rect
            if h < 1 or w < 1 or y0 < 0 or x0 < 0 or y0 + h > self.H or x0 + w > self.W:
                raise InvalidSpec(f"needle rect {self.needle_rect} outside the {self.H}x{self.W} grid")
            if not 0 <= self.needle_frame < self.T:
                raise InvalidSpec("needle frame out of range")
            if self.needle_feature is not None and np.shape(self.needle_feature) != (self.C,):
                raise InvalidSpec("needle feature must have length C")
        if self.scenario == "moving_block" and self.block_size < 1:
            raise InvalidSpec("block size must be >= 1")
        if self.scenario == "mixed":
            if not 0.0 <= self.redundancy <= 1.0:
                raise InvalidSpec("redundancy must lie in [0, 1]")
            if self.C < 2:
                raise InvalidSpec("mixed scenario needs C >= 2")


@dataclass
class SynthVideo:
    grid: TokenGrid
    planted_redundancy: float
    spec: SynthSpec


def unit_vectors(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def orthogonal_unit(rng: np.random.Generator, to: np.ndarray) -> np.ndarray:
    """Random unit vector orthogonal to ``to`` (needs len(to) >= 2)."""
    to = to / np.linalg.norm(to)
    while True:
        v = rng.standard_normal(to.shape)
        v -= (v @ to) * to
        n = np.linalg.norm(v)
        if n > 1e-6:
            return v / n


def _block_rect(spec: SynthSpec, t: int) -> tuple[int, int, int, int]:
    """Visible part of the moving block at frame t as (y0, y1, x0, x1), possibly empty."""
    y = spec.block_start[0] + t * spec.velocity[0]
    x = spec.block_start[1] + t * spec.velocity[1]
    y0, y1 = max(y, 0), min(y + spec.block_size, spec.H)
    x0, x1 = max(x, 0), min(x + spec.block_size, spec.W)
    return y0, max(y0, y1), x0, max(x0, x1)


def _rect_area(r) -> int:
    return (r[1] - r[0]) * (r[3] - r[2])


def _rect_intersection(a, b) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0])) * max(0, min(a[3], b[3]) - max(a[2], b[2]))


def planted_redundancy(spec: SynthSpec) -> float:
    T, H, W = spec.T, spec.H, spec.W
    cells = T * H * W
    if spec.scenario == "static":
        repeated = (T - 1) * H * W
    elif spec.scenario == "noise":
        repeated = 0
    elif spec.scenario == "scene_cut":
        repeated = (T - 1 - len(spec.cut_frames)) * H * W
    elif spec.scenario == "needle":
        _, _, h, w = spec.needle_rect
        f = spec.needle_frame
        repeated = (T - 1) * H * W - h * w * ((f >= 1) + (f + 1 < T))
    elif spec.scenario == "moving_block":
        changed = 0
        for t in range(1, T):
            a, b = _block_rect(spec, t - 1), _block_rect(spec, t)
            changed += _rect_area(a) + _rect_area(b) - 2 * _rect_intersection(a, b)
        repeated = (T - 1) * H * W - changed
    else:  # mixed
        repeated = (T - 1) * _copied_per_frame(spec)
    return repeated / cells


def _copied_per_frame(spec: SynthSpec) -> int:
    return int(round(spec.redundancy * spec.H * spec.W))


def synth_video(spec: SynthSpec) -> SynthVideo:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    T, H, W, C = spec.T, spec.H, spec.W, spec.C
    data = np.empty((T, H, W, C), dtype=np.float64)

    if spec.scenario == "static":
        data[:] = unit_vectors(rng, 1, C)[0]
    elif spec.scenario == "noise":
        data[:] = unit_vectors(rng, T * H * W, C).reshape(T, H, W, C)
    elif spec.scenario == "scene_cut":
        bounds = [0, *spec.cut_frames, T]
        scenes = unit_vectors(rng, len(bounds) - 1, C)
        for k, (a, b) in enumerate(zip(bounds, bounds[1:])):
            data[a:b] = scenes[k]
    elif spec.scenario == "needle":
        background = unit_vectors(rng, 1, C)[0]
        if spec.needle_feature is not None:
            needle = np.asarray(spec.needle_feature, dtype=np.float64)
        elif C >= 2:
            needle = orthogonal_unit(rng, background)
        else:
            needle = -background
        data[:] = background
        y0, x0, h, w = spec.needle_rect
        data[spec.needle_frame, y0 : y0 + h, x0 : x0 + w] = needle
    elif spec.scenario == "moving_block":
        background = unit_vectors(rng, 1, C)[0]
        block = orthogonal_unit(rng, background) if C >= 2 else -background
        data[:] = background
        for t in range(T):
            y0, y1, x0, x1 = _block_rect(spec, t)
            data[t, y0:y1, x0:x1] = block
    else:
        _fill_mixed(spec, rng, data)

    return SynthVideo(TokenGrid(data.astype(np.float32)), planted_redundancy(spec), spec)


def _fill_mixed(spec: SynthSpec, rng: np.random.Generator, data: np.ndarray) -> None:
    """Frame 0 is noise; later frames copy a fixed-size random subset of cells
    and drift the rest with a cosine to the previous frame drawn from U[0, 1)."""
    T, H, W, C = data.shape
    n_cells = H * W
    n_copy = _copied_per_frame(spec)
    data[0] = unit_vectors(rng, n_cells, C).reshape(H, W, C)
    for t in range(1, T):
        prev = data[t - 1].reshape(n_cells, C)
        cur = prev.copy()
        drift = rng.permutation(n_cells)[n_copy:]
        cos = rng.uniform(0.0, 1.0, len(drift))
        for k, c in zip(drift, cos):
            cur[k] = c * prev[k] + np.sqrt(1.0 - c * c) * orthogonal_unit(rng, prev[k])
        data[t] = cur.reshape(H, W, C)
