"""Binary network checkpoints.

Layout (little-endian): b"DPMK", u32 version, u32 K, u32 feature_dim,
u64 training seed, u8 head (0 kernel, 1 direct), u32 tensor count, per tensor
u32 ndim + u32 dims, then the float64 parameters in layout order, then a
CRC32 of everything before it.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, CheckpointMagicError, CheckpointShapeError, CheckpointTruncatedError
from .features import FEATURE_DIM
from .network import HEADS, LAYOUT, N_PARAMS, NetParams

MAGIC = b"DPMK"
VERSION = 1
_HEAD = struct.Struct("<4sIIIQBI")


@dataclass(frozen=True)
class CheckpointMeta:
    k: int
    seed: int = 0
    head: str = "kernel"
    feature_dim: int = FEATURE_DIM


def encode_checkpoint(params: NetParams, meta: CheckpointMeta) -> bytes:
    parts = [_HEAD.pack(MAGIC, VERSION, meta.k, meta.feature_dim, int(meta.seed) & (2 ** 64 - 1),
                        HEADS.index(meta.head), len(LAYOUT))]
    for name, shape in LAYOUT:
        parts.append(struct.pack(f"<I{len(shape)}I", len(shape), *shape))
    parts.append(np.ascontiguousarray(params.flat(), dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(params: NetParams, meta: CheckpointMeta, path) -> None:
    Path(path).write_bytes(encode_checkpoint(params, meta))


def decode_checkpoint(data: bytes, expected_k: int | None = None):
    if len(data) < 4:
        raise CheckpointTruncatedError("checkpoint shorter than its magic")
    if data[:4] != MAGIC:
        raise CheckpointMagicError(f"bad checkpoint magic {data[:4]!r}")
    if len(data) < _HEAD.size:
        raise CheckpointTruncatedError("checkpoint header is truncated")
    _, version, k, fdim, seed, head, n_t = _HEAD.unpack_from(data)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if fdim != FEATURE_DIM:
        raise CheckpointShapeError(f"checkpoint feature_dim {fdim} != {FEATURE_DIM}")
    if expected_k is not None and k != expected_k:
        raise CheckpointShapeError(f"checkpoint was trained for K={k}, not K={expected_k}")
    if head >= len(HEADS):
        raise CheckpointError(f"unknown head code {head}")
    if n_t != len(LAYOUT):
        raise CheckpointShapeError(f"checkpoint has {n_t} tensors, expected {len(LAYOUT)}")
    off = _HEAD.size
    for name, shape in LAYOUT:
        if len(data) < off + 4:
            raise CheckpointTruncatedError("shape table is truncated")
        (nd,) = struct.unpack_from("<I", data, off)
        if len(data) < off + 4 + 4 * nd:
            raise CheckpointTruncatedError("shape table is truncated")
        dims = struct.unpack_from(f"<{nd}I", data, off + 4)
        if tuple(dims) != shape:
            raise CheckpointShapeError(f"{name}: checkpoint shape {dims} != {shape}")
        off += 4 + 4 * nd
    end = off + 8 * N_PARAMS
    if len(data) < end + 4:
        raise CheckpointTruncatedError(f"checkpoint has {len(data)} bytes, expected {end + 4}")
    (crc,) = struct.unpack_from("<I", data, end)
    if crc != zlib.crc32(data[:end]):
        raise CheckpointError("checkpoint CRC mismatch")
    params = NetParams.from_flat(np.frombuffer(data, dtype="<f8", count=N_PARAMS, offset=off))
    return params, CheckpointMeta(k=k, seed=seed, head=HEADS[head], feature_dim=fdim)


def load_checkpoint(path, expected_k: int | None = None):
    """Returns (params, meta); raises on magic, shape, truncation, or CRC problems."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    return decode_checkpoint(data, expected_k)
