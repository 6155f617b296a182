"""Ray/scene intersection (linear scan over primitives and light quads)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .scene import Scene

T_MIN = 1e-4  # self-intersection offset, scene units


@dataclass(frozen=True)
class Hit:
    t: float
    position: np.ndarray
    normal: np.ndarray  # unit, facing the incoming ray
    front_face: bool  # geometric normal already faced the ray
    material_id: int  # -1 for light quads
    is_light: bool
    index: int  # primitive index, or light index when is_light


def intersect(scene: Scene, origin, direction, t_min: float = T_MIN, t_max: float = float("inf")) -> Hit | None:
    """Nearest hit with t in (t_min, t_max), or None. ``direction`` must be unit length."""
    t_max = min(float(t_max), 1e30)
    ps = scene.packed
    h = backend.kernels.intersect(ps, origin, direction, float(t_min), t_max)
    if h is None:
        return None
    t, px, py, pz, nx, ny, nz, front, idx, is_light = h
    mat = -1 if is_light else int(ps.prim_mat[idx])
    return Hit(t, np.array([px, py, pz]), np.array([nx, ny, nz]), bool(front), mat, bool(is_light), int(idx))


def intersect_linear(scene: Scene, origin, direction, t_min: float = T_MIN, t_max: float = float("inf")):
    """Per-primitive oracle: minimum t over independent single-shape tests."""
    best = None
    for i, prim in enumerate(scene.primitives):
        sub = Scene((prim,), scene.materials, (), scene.camera)
        h = _pk_single(sub, origin, direction, t_min, t_max)
        if h is not None and (best is None or h[0] < best[0]):
            best = (h[0], i, False)
    for i, light in enumerate(scene.lights):
        sub = Scene((), scene.materials, (light,), scene.camera)
        h = _pk_single(sub, origin, direction, t_min, t_max)
        if h is not None and (best is None or h[0] < best[0]):
            best = (h[0], i, True)
    return best


def _pk_single(scene, origin, direction, t_min, t_max):
    return backend.pykernels.intersect(scene.packed, origin, direction, t_min, min(t_max, 1e30))
