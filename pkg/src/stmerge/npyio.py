"""NPY 1.0 tensors (little-endian float32, C order only) and JSON run metadata."""

from __future__ import annotations

import ast
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import (
    BadMagic,
    FormatError,
    IoFailure,
    NonFinitePayload,
    TruncatedPayload,
    UnsupportedDtype,
    WrongRank,
)
from .tensor import TokenGrid

MAGIC = b"\x93NUMPY"
ALIGN = 64
METADATA_VERSION = "1.0"


def npy_header(shape: tuple[int, ...]) -> bytes:
    """Full NPY 1.0 preamble (magic, version, length, padded header dict)."""
    text = "{'descr': '<f4', 'fortran_order': False, 'shape': %r, }" % (tuple(int(d) for d in shape),)
    body = text.encode("latin1")
    fixed = len(MAGIC) + 2 + 2
    pad = (-(fixed + len(body) + 1)) % ALIGN
    body = body + b" " * pad + b"\n"
    if len(body) > 0xFFFF:
        raise FormatError("header too long for NPY 1.0")
    return MAGIC + b"\x01\x00" + struct.pack("<H", len(body)) + body


def encode_npy(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    return npy_header(array.shape) + payload


def decode_npy(raw: bytes, rank: int | None = None) -> np.ndarray:
    if len(raw) < 10 or raw[:6] != MAGIC:
        raise BadMagic("not an NPY file (bad magic bytes)")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise BadMagic(f"only NPY version 1.0 is supported, got {major}.{minor}")
    (hlen,) = struct.unpack("<H", raw[8:10])
    if len(raw) < 10 + hlen:
        raise TruncatedPayload("file ends inside the header")
    try:
        header = ast.literal_eval(raw[10 : 10 + hlen].decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"unparseable NPY header: {exc}") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError("NPY header must hold exactly descr, fortran_order and shape")
    if header["descr"] != "<f4":
        raise UnsupportedDtype(f"expected little-endian float32 ('<f4'), got {header['descr']!r}")
    if header["fortran_order"] is not False:
        raise UnsupportedDtype("Fortran-ordered arrays are not supported")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(d, int) and d >= 0 for d in shape):
        raise FormatError(f"invalid shape {shape!r}")
    if rank is not None and len(shape) != rank:
        raise WrongRank(f"expected a {rank}-D array, got shape {shape}")
    count = int(np.prod(shape, dtype=np.int64))
    payload = raw[10 + hlen :]
    if len(payload) != 4 * count:
        raise TruncatedPayload(f"payload holds {len(payload)} bytes, shape {shape} needs {4 * count}")
    array = np.frombuffer(payload, dtype="<f4").reshape(shape)
    if not np.isfinite(array).all():
        raise NonFinitePayload("payload contains NaN or Inf")
    return array.astype(np.float32)


def _write_bytes(path, raw: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(raw)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_tensor(path) -> TokenGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    return TokenGrid(decode_npy(raw, rank=4))


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_npy(fh.read(), rank=2)


def write_tensor(features: np.ndarray, path) -> None:
    features = np.asarray(features)
    if features.ndim not in (2, 4):
        raise WrongRank(f"expected an (N, C) matrix or a (T, H, W, C) grid, got shape {features.shape}")
    _write_bytes(path, encode_npy(features))


def _round_floats(obj: Any) -> Any:
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


@dataclass
class MergeMetadata:
    grid: tuple[int, int, int, int]
    tau_s: float
    tau_t: float
    root_scale: int
    policy: str
    default_position: str
    tokens: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    version: str = METADATA_VERSION

    def to_dict(self) -> dict:
        T, H, W, C = self.grid
        return {
            "version": self.version,
            "grid": {"T": T, "H": H, "W": W, "C": C},
            "thresholds": {"tau_s": float(self.tau_s), "tau_t": float(self.tau_t)},
            "root_scale": self.root_scale,
            "policy": self.policy,
            "default_position": self.default_position,
            "tokens": self.tokens,
            "stats": self.stats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MergeMetadata":
        g = d["grid"]
        return cls(
            grid=(g["T"], g["H"], g["W"], g["C"]),
            tau_s=d["thresholds"]["tau_s"],
            tau_t=d["thresholds"]["tau_t"],
            root_scale=d["root_scale"],
            policy=d["policy"],
            default_position=d["default_position"],
            tokens=d["tokens"],
            stats=d["stats"],
            version=d["version"],
        )


def metadata_from_result(result, timing: bool = False) -> MergeMetadata:
    """Metadata for a ``MergeResult``.

    Wall time is left out (null) unless ``timing`` is set, so that identical
    runs produce identical files.
    """
    out = result.output
    tokens = out.tokens
    records = []
    for k in range(len(tokens)):
        records.append({
            "id": k,
            "root_frame": int(tokens.root_frame[k]),
            "regions": [{"t": t, "y0": y0, "x0": x0, "h": h, "w": w} for t, y0, x0, h, w in tokens.regions(k)],
            "area": int(tokens.area[k]),
            "merged_pos": [float(v) for v in out.merged_pos[k]],
            "survived_pos": [int(v) for v in out.survived_pos[k]],
            "reassigned_pos": int(out.reassigned_pos[k]),
        })
    cfg = result.config
    stats = {
        "n_input_tokens": result.n_input_tokens,
        "n_output_tokens": result.n_output_tokens,
        "retention_ratio": result.retention_ratio,
        "spatial_comparisons": result.spatial_comparisons,
        "temporal_comparisons": result.temporal_comparisons,
        "wall_time_ms": result.wall_time_ms if timing else None,
    }
    return MergeMetadata(
        grid=tuple(int(d) for d in result.grid_shape),
        tau_s=cfg.tau_s, tau_t=cfg.tau_t, root_scale=cfg.root_scale,
        policy=cfg.policy, default_position=cfg.position,
        tokens=records, stats=stats,
    )


def metadata_bytes(meta: MergeMetadata | dict) -> bytes:
    d = meta.to_dict() if isinstance(meta, MergeMetadata) else meta
    text = json.dumps(_round_floats(d), ensure_ascii=False, separators=(",", ":"))
    return (text + "\n").encode("utf-8")


def write_metadata(meta: MergeMetadata | dict, path) -> None:
    _write_bytes(path, metadata_bytes(meta))


def read_metadata(path) -> MergeMetadata:
    with open(path, "rb") as fh:
        try:
            return MergeMetadata.from_dict(json.loads(fh.read().decode("utf-8")))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"malformed metadata file {os.fspath(path)}: {exc}") from None
