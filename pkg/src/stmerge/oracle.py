"""Naive reference implementations used to cross-check the vectorized engine.

Nothing here reuses the merge code: node features are recomputed as plain
means over leaf rectangles, the quadtree is walked by recursion, and tracklets
are found by depth-first search over an explicit overlap graph.  Only the
scalar cosine similarity is shared.  Intended for small grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import cosine_similarity


@dataclass(frozen=True)
class OracleToken:
    frame: int
    y0: int
    x0: int
    h: int
    w: int
    feature: np.ndarray

    @property
    def area(self) -> int:
        return self.h * self.w


@dataclass(frozen=True)
class OracleTracklet:
    regions: frozenset  # of (t, y0, x0, h, w)
    feature: np.ndarray
    root: tuple[int, int, int]  # (t, y0, x0)


def root_span(height: int, width: int, root_scale: int) -> int:
    """Side length, in leaf cells, of a root node."""
    span = 1
    while max(-(-height // span), -(-width // span)) > root_scale:
        span *= 2
    return span


def oracle_spatial(frame: np.ndarray, tau_s: float, root_scale: int = 4, t: int = 0) -> list[OracleToken]:
    frame = np.asarray(frame, dtype=np.float64)
    H, W, _ = frame.shape

    def mean(y0, x0, s):
        return frame[y0 : y0 + s, x0 : x0 + s].reshape(-1, frame.shape[2]).mean(axis=0)

    def visit(y0, x0, s, out):
        feature = mean(y0, x0, s)
        h, w = min(s, H - y0), min(s, W - x0)
        if s == 1:
            out.append(OracleToken(t, y0, x0, h, w, feature))
            return
        half = s // 2
        kids = [(y0 + dy, x0 + dx) for dy in (0, half) for dx in (0, half) if y0 + dy < H and x0 + dx < W]
        if all(cosine_similarity(feature, mean(cy, cx, half)) > tau_s for cy, cx in kids):
            out.append(OracleToken(t, y0, x0, h, w, feature))
            return
        for cy, cx in kids:
            visit(cy, cx, half, out)

    span = root_span(H, W, root_scale)
    out: list[OracleToken] = []
    for y0 in range(0, H, span):
        for x0 in range(0, W, span):
            visit(y0, x0, span, out)
    return sorted(out, key=lambda tok: (tok.y0, tok.x0))


def _overlaps(a: OracleToken, b: OracleToken) -> bool:
    return a.y0 < b.y0 + b.h and b.y0 < a.y0 + a.h and a.x0 < b.x0 + b.w and b.x0 < a.x0 + a.w


def oracle_temporal(frames: list[list[OracleToken]], tau_t: float, policy: str = "top_left") -> list[OracleTracklet]:
    nodes = [tok for tokens in frames for tok in tokens]
    index = {id(tok): k for k, tok in enumerate(nodes)}
    adjacency: list[list[int]] = [[] for _ in nodes]
    for t in range(1, len(frames)):
        for src in frames[t]:
            qualifying = []
            for dst in frames[t - 1]:
                if not _overlaps(src, dst):
                    continue
                sim = cosine_similarity(src.feature, dst.feature)
                if sim > tau_t:
                    qualifying.append((sim, dst))
            if not qualifying:
                continue
            if policy == "top_left":
                chosen = min(qualifying, key=lambda q: (q[1].y0, q[1].x0))[1]
            else:
                chosen = min(qualifying, key=lambda q: (-q[0], q[1].y0, q[1].x0))[1]
            a, b = index[id(src)], index[id(chosen)]
            adjacency[a].append(b)
            adjacency[b].append(a)

    seen = [False] * len(nodes)
    out = []
    for start in range(len(nodes)):
        if seen[start]:
            continue
        stack, component = [start], []
        seen[start] = True
        while stack:
            k = stack.pop()
            component.append(nodes[k])
            for j in adjacency[k]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        total = sum(tok.area for tok in component)
        feature = sum(tok.area * tok.feature for tok in component) / total
        root = min(component, key=lambda tok: (tok.frame, tok.y0, tok.x0))
        regions = frozenset((tok.frame, tok.y0, tok.x0, tok.h, tok.w) for tok in component)
        out.append(OracleTracklet(regions, feature, (root.frame, root.y0, root.x0)))
    return sorted(out, key=lambda tr: tr.root)


def oracle_merge(data: np.ndarray, tau_s: float, tau_t: float, root_scale: int = 4, policy: str = "top_left") -> list[OracleTracklet]:
    """Full reference pipeline on a ``(T, H, W, C)`` array."""
    data = np.asarray(data)
    frames = [oracle_spatial(data[t], tau_s, root_scale, t) for t in range(data.shape[0])]
    return oracle_temporal(frames, tau_t, policy)


def compare(result, reference: list[OracleTracklet], rtol: float = 1e-5) -> list[str]:
    """Differences between a ``MergeResult`` and the oracle's tracklets (empty when equal)."""
    tokens = result.output.tokens
    problems = []
    if len(tokens) != len(reference):
        return [f"token count {len(tokens)} != oracle {len(reference)}"]
    for k, ref in enumerate(reference):
        tok = tokens[k]
        if frozenset(tok.regions) != ref.regions:
            problems.append(f"token {k}: regions differ")
            continue
        err = np.linalg.norm(tok.feature - ref.feature)
        if err > rtol * max(np.linalg.norm(ref.feature), 1e-12):
            problems.append(f"token {k}: feature relative error {err / np.linalg.norm(ref.feature):.2e}")
    return problems
