"""Token grids and the small amount of vector math everything else shares."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import EmptyChildren, FrameOutOfRange, InvalidGrid, ZeroNormVector

ZERO_NORM = 1e-12


@dataclass(frozen=True)
class TokenGrid:
    """A ``(T, H, W, C)`` float32 tensor of visual tokens."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 4:
            raise InvalidGrid(f"token grid must be 4-D (T, H, W, C), got shape {data.shape}")
        if min(data.shape) < 1:
            raise InvalidGrid(f"every grid dimension must be >= 1, got {data.shape}")
        if data.dtype != np.float32:
            data = data.astype(np.float32)
        if not np.isfinite(data).all():
            raise InvalidGrid("token grid contains NaN or Inf")
        data = np.ascontiguousarray(data)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def H(self) -> int:
        return self.data.shape[1]

    @property
    def W(self) -> int:
        return self.data.shape[2]

    @property
    def C(self) -> int:
        return self.data.shape[3]

    @property
    def n_tokens(self) -> int:
        return self.T * self.H * self.W

    def frame(self, t: int) -> np.ndarray:
        if not 0 <= t < self.T:
            raise FrameOutOfRange(f"frame {t} outside [0, {self.T})")
        return self.data[t]


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"expected two vectors of equal length, got {a.shape} and {b.shape}")
    na = np.sqrt(a @ a)
    nb = np.sqrt(b @ b)
    if na < ZERO_NORM or nb < ZERO_NORM:
        raise ZeroNormVector("cosine similarity of a zero-norm vector is undefined")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def row_norms(x: np.ndarray) -> np.ndarray:
    """Euclidean norm over the last axis, in float64."""
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(np.einsum("...c,...c->...", x, x))


def cosine_rows(a: np.ndarray, b: np.ndarray, check: np.ndarray | None = None) -> np.ndarray:
    """Row-wise cosine similarity of two equally shaped ``(..., C)`` arrays.

    ``check`` optionally masks which rows are real comparisons; only those are
    tested for zero norms (padding rows may legitimately be zero).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = row_norms(a)
    nb = row_norms(b)
    return _cosine_from_parts(np.einsum("...c,...c->...", a, b), na, nb, check)


def _cosine_from_parts(dot, na, nb, check=None):
    degenerate = (na < ZERO_NORM) | (nb < ZERO_NORM)
    if check is not None:
        degenerate = degenerate & check
    if degenerate.any():
        raise ZeroNormVector(f"{int(degenerate.sum())} comparison(s) involve a zero-norm vector")
    denom = na * nb
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = np.where(denom > 0, dot / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(sim, -1.0, 1.0)


def area_weighted_pool(children: Iterable[tuple[Sequence[float], int]]) -> np.ndarray:
    """Mean of child features weighted by how many leaf cells each covers."""
    children = list(children)
    if not children:
        raise EmptyChildren("cannot pool an empty list of children")
    feats = np.asarray([np.asarray(f, dtype=np.float64) for f, _ in children])
    areas = np.asarray([a for _, a in children], dtype=np.float64)
    if (areas < 1).any():
        raise ValueError("child areas must be >= 1")
    return (areas[:, None] * feats).sum(axis=0) / areas.sum()


def grouped_weighted_sum(values: np.ndarray, weights: np.ndarray, members: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    """``out[k] = sum(weights[m] * values[m] for m in members[ptr[k]:ptr[k+1]])``.

    Backed by a CSR product, which accumulates each row in member order and is
    therefore deterministic.
    """
    n_groups = len(ptr) - 1
    mat = sparse.csr_matrix(
        (np.asarray(weights, dtype=np.float64)[members], members, ptr),
        shape=(n_groups, len(values)),
    )
    return np.asarray(mat @ np.asarray(values, dtype=np.float64))
