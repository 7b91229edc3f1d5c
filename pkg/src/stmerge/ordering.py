"""Linearize merged tokens and assign position ids.

Three position records are produced for every token so that downstream code
can choose among them without re-running the merge:

* ``merged``: mean (t, y, x) over all covered leaf cells, cell centers at +0.5
* ``survived``: (t, y0, x0) of the tracklet's root token
* ``reassigned``: the token's index in the final sequence
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownStrategy
from .temporal import MergedTokenSet
from .tensor import grouped_weighted_sum

STRATEGIES = ("merged", "survived", "reassigned")


@dataclass
class OrderedOutput:
    tokens: MergedTokenSet
    merged_pos: np.ndarray  # (N, 3) float64
    survived_pos: np.ndarray  # (N, 3) int64
    reassigned_pos: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return len(self.tokens)


def _merged_positions(tokens: MergedTokenSet) -> np.ndarray:
    sp = tokens.spatial
    m = tokens.members
    if len(m) == 0:
        return np.zeros((0, 3))
    area = (sp.h[m] * sp.w[m]).astype(np.float64)
    # a rectangle's cell centers average to its geometric center
    centers = np.stack([sp.frame[m], sp.y0[m] + sp.h[m] / 2, sp.x0[m] + sp.w[m] / 2], axis=1)
    sums = grouped_weighted_sum(centers, area, np.arange(len(m)), tokens.member_ptr)
    return sums / tokens.area[:, None]


def reorder(merged: MergedTokenSet) -> OrderedOutput:
    """Earlier root frames first, then raster order of root top-left corners."""
    order = np.lexsort((merged.root_x0, merged.root_y0, merged.root_frame))
    tokens = merged.take(order)
    survived = np.stack([tokens.root_frame, tokens.root_y0, tokens.root_x0], axis=1).astype(np.int64)
    return OrderedOutput(
        tokens=tokens,
        merged_pos=_merged_positions(tokens),
        survived_pos=survived.reshape(-1, 3),
        reassigned_pos=np.arange(len(tokens), dtype=np.int64),
    )


def assign_positions(ordered: OrderedOutput, strategy: str = "reassigned") -> np.ndarray:
    if strategy == "merged":
        return ordered.merged_pos
    if strategy == "survived":
        return ordered.survived_pos
    if strategy == "reassigned":
        return ordered.reassigned_pos
    raise UnknownStrategy(f"unknown position strategy {strategy!r}; expected one of {STRATEGIES}")
