"""Photon emission and tracing, the PhotonMap container, and the binary photon dump.

Only photons on light-specular (LS) paths are kept: the first surface
interaction after emission is a mirror or dielectric. They are stored at every
later Lambertian vertex with power ``throughput * phi0 / n_emit``.

Dump layout (little-endian): b"PHD1", u32 version=1, u64 N, u64 M, then M
records of position 3xf32, incident_dir 3xf32, power 3xf32, normal 3xf32,
bounce_count u32 (52 bytes each).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _pykernels as pk
from . import backend
from .errors import (ConfigurationError, PhotonMagicError, PhotonTruncatedError,
                     PhotonVersionError)
from .scene import AreaLight, Scene

MAGIC = b"PHD1"
VERSION = 1
RECORD = np.dtype([
    ("position", "<f4", 3), ("incident_dir", "<f4", 3), ("power", "<f4", 3),
    ("normal", "<f4", 3), ("bounce", "<u4"),
])
assert RECORD.itemsize == 52
HEADER = struct.Struct("<4sIQQ")
CHUNK = 8192  # emission paths per work item


@dataclass(frozen=True)
class Photon:
    position: np.ndarray
    incident_dir: np.ndarray
    power: np.ndarray
    surface_normal: np.ndarray
    bounce_count: int


class PhotonMap:
    """Retained photons plus the emitted path count N.

    Arrays are float32 (matching the dump); ``first_kind`` records the material
    kind of the light-adjacent vertex for every photon (1 mirror, 2 dielectric).
    """

    def __init__(self, positions, incident, power, normals, bounce, n_emitted, first_kind=None):
        self.positions = np.ascontiguousarray(positions, dtype=np.float32).reshape(-1, 3)
        self.incident = np.ascontiguousarray(incident, dtype=np.float32).reshape(-1, 3)
        self.power = np.ascontiguousarray(power, dtype=np.float32).reshape(-1, 3)
        self.normals = np.ascontiguousarray(normals, dtype=np.float32).reshape(-1, 3)
        self.bounce = np.ascontiguousarray(bounce, dtype=np.uint32).reshape(-1)
        self.n_emitted = int(n_emitted)
        m = len(self.positions)
        if first_kind is None:
            # a dump only ever holds LS photons; the exact specular kind is not persisted
            first_kind = np.full(m, 255, dtype=np.uint8)
        self.first_kind = np.ascontiguousarray(first_kind, dtype=np.uint8)
        if not (len(self.incident) == len(self.power) == len(self.normals) == len(self.bounce) == m):
            raise ValueError("photon arrays must have equal length")

    @property
    def m_valid(self) -> int:
        return len(self.positions)

    def __len__(self):
        return self.m_valid

    @property
    def usable(self) -> bool:
        """Downstream estimation needs N >= 1."""
        return self.n_emitted >= 1

    def __getitem__(self, i) -> Photon:
        return Photon(self.positions[i].astype(np.float64), self.incident[i].astype(np.float64),
                      self.power[i].astype(np.float64), self.normals[i].astype(np.float64), int(self.bounce[i]))

    def total_power(self) -> np.ndarray:
        return self.power.astype(np.float64).sum(axis=0)

    def to_records(self) -> np.ndarray:
        rec = np.empty(self.m_valid, dtype=RECORD)
        rec["position"] = self.positions
        rec["incident_dir"] = self.incident
        rec["power"] = self.power
        rec["normal"] = self.normals
        rec["bounce"] = self.bounce
        return rec

    def equals(self, other: "PhotonMap") -> bool:
        return (self.n_emitted == other.n_emitted and self.m_valid == other.m_valid
                and self.to_records().tobytes() == other.to_records().tobytes())

    def scaled(self, s: float) -> "PhotonMap":
        return PhotonMap(self.positions, self.incident, self.power * np.float32(s), self.normals,
                         self.bounce, self.n_emitted, self.first_kind)


def emit_photon(light: AreaLight, u):
    """Sample an emission ray from four uniforms.

    Returns (origin, direction, phi0): origin uniform on the quad, direction
    cosine-weighted about the emission normal, phi0 = L_e * area * pi.
    """
    c, eu, ev = light.corner, light.edge_u, light.edge_v
    origin = np.array([c[i] + u[0] * eu[i] + u[1] * ev[i] for i in range(3)])
    nx, ny, nz = light.normal
    d, _ = pk._cosine_dir(nx, ny, nz, float(u[2]), float(u[3]))
    return origin, np.array(d), np.array(light.power)


def trace_photons(scene: Scene, n_emit: int, max_bounces: int = 8, seed: int = 0,
                  threads: int = 1, kernels=None) -> PhotonMap:
    """Trace ``n_emit`` emission paths; path i always uses stream (seed, i)."""
    if n_emit < 0:
        raise ConfigurationError("n_emit must be >= 0")
    if max_bounces < 1:
        raise ConfigurationError("max_bounces must be >= 1")
    if not scene.lights:
        raise ConfigurationError("photon tracing needs at least one light")
    if n_emit == 0:
        z = np.zeros((0, 3))
        return PhotonMap(z, z, z, z, np.zeros(0), 0, np.zeros(0))
    k = kernels or backend.kernels
    ps = scene.packed
    seed = int(seed) & ((1 << 64) - 1)
    parts = backend.run_chunks(
        lambda a, b: k.trace_photon_range(ps, seed, a, b, int(n_emit), int(max_bounces)),
        backend.chunks(n_emit, CHUNK), threads,
    )
    cols = [np.concatenate([p[j] for p in parts]) for j in range(6)]
    return PhotonMap(*cols[:5], n_emit, cols[5])


def save_photons(pmap: PhotonMap, path) -> None:
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, pmap.n_emitted, pmap.m_valid))
        f.write(pmap.to_records().tobytes())


def load_photons(path) -> PhotonMap:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise PhotonMagicError(f"{path}: not a photon dump (bad magic {data[:4]!r})")
    if len(data) < HEADER.size:
        raise PhotonTruncatedError(f"{path}: truncated header")
    _, version, n, m = HEADER.unpack_from(data)
    if version != VERSION:
        raise PhotonVersionError(f"{path}: unsupported version {version}")
    need = HEADER.size + m * RECORD.itemsize
    if len(data) < need:
        raise PhotonTruncatedError(f"{path}: expected {m} records, file holds {(len(data) - HEADER.size) // RECORD.itemsize}")
    rec = np.frombuffer(data, dtype=RECORD, count=m, offset=HEADER.size)
    return PhotonMap(rec["position"], rec["incident_dir"], rec["power"], rec["normal"], rec["bounce"], n)
