"""Training sets: features at first-diffuse shading points with converged PM labels."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .density import EPANECHNIKOV, ShadingBatch
from .errors import DatasetError
from .estimate import ClassicPM
from .features import FeatureBatch, build_feature_batch
from .knn import KnnIndex
from .photons import trace_photons
from .rng import DERIVED, stream_state
from .shading import random_shading_points

log = logging.getLogger(__name__)

REF_FACTOR = 100
REF_K = 500


def sub_seed(seed: int, *path: int) -> int:
    """Deterministic child seed; ``path`` is (scene index, role, item)."""
    a, b = (path + (0, 0))[:2]
    s = stream_state(int(seed), DERIVED, a, b)
    for extra in path[2:]:
        s = stream_state(s, DERIVED, extra, 0)
    return s


@dataclass
class Dataset:
    inputs: FeatureBatch
    reference: np.ndarray  # (S, 3)
    k: int

    def __len__(self):
        return len(self.reference)

    def subset(self, sel):
        return Dataset(self.inputs[sel], self.reference[sel], self.k)

    @classmethod
    def empty(cls, k):
        return cls(FeatureBatch(np.zeros((0, k, 12)), np.zeros((0, k, 3)), np.zeros((0, k))), np.zeros((0, 3)), k)

    @classmethod
    def concat(cls, parts, k):
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty(k)
        return cls(FeatureBatch(np.concatenate([p.inputs.features for p in parts]),
                                np.concatenate([p.inputs.contributions for p in parts]),
                                np.concatenate([p.inputs.mask for p in parts])),
                   np.concatenate([p.reference for p in parts]), k)

    def save(self, path):
        np.savez(path, features=self.inputs.features, contributions=self.inputs.contributions,
                 mask=self.inputs.mask, reference=self.reference, k=np.int64(self.k))

    @classmethod
    def load(cls, path):
        try:
            with np.load(path, allow_pickle=False) as z:
                return cls(FeatureBatch(z["features"], z["contributions"], z["mask"]), z["reference"], int(z["k"]))
        except (OSError, KeyError, ValueError) as exc:
            raise DatasetError(f"cannot load dataset {path}: {exc}") from exc


def make_training_set(scenes, photons_per_scene, points_per_scene: int, k: int, seed: int,
                      maps_per_scene: int = 16, ref_factor: int = REF_FACTOR, ref_k: int = REF_K,
                      maps_per_point: int = 1, threads: int = 1) -> Dataset:
    """Samples from random first-diffuse hits of each scene's camera.

    Labels come from one classic PM map with ``ref_factor`` times the photons
    (K = ``ref_k``, Epanechnikov). Inputs are drawn from ``maps_per_scene``
    independent photon maps; every point is gathered in ``maps_per_point`` of
    them, so the set holds points_per_scene * maps_per_point samples per scene.

    ``photons_per_scene`` is an emitted count or a sequence of counts that the
    maps cycle through. The label map uses ``ref_factor`` times the largest.
    """
    counts = [int(photons_per_scene)] if np.ndim(photons_per_scene) == 0 else [int(n) for n in photons_per_scene]
    if not counts or min(counts) <= 0:
        raise DatasetError("photon counts must be positive")
    parts = []
    if points_per_scene <= 0:
        return Dataset.empty(k)
    if ref_factor < 1 or not 1 <= maps_per_point <= maps_per_scene:
        raise DatasetError("need ref_factor >= 1 and 1 <= maps_per_point <= maps_per_scene")
    for si, scene in enumerate(scenes):
        ref = trace_photons(scene, ref_factor * max(counts), seed=sub_seed(seed, si, 0), threads=threads)
        if ref.m_valid == 0:
            log.warning("scene %d has no LS photons; skipped", si)
            continue
        sb = _collect_points(scene, points_per_scene, sub_seed(seed, si, 1), threads)
        ref_index = KnnIndex(ref.positions)
        labels = ClassicPM(ref_k, EPANECHNIKOV)(sb, ref, ref_index, threads)
        del ref_index, ref
        groups = np.array_split(np.arange(len(sb)), maps_per_scene)
        for g in range(maps_per_scene):
            sel = np.concatenate([groups[(g - r) % maps_per_scene] for r in range(maps_per_point)])
            if len(sel) == 0:
                continue
            pm = trace_photons(scene, counts[g % len(counts)], seed=sub_seed(seed, si, 2, g), threads=threads)
            if pm.m_valid == 0:
                log.warning("scene %d map %d has no LS photons; %d points dropped", si, g, len(sel))
                continue
            sub = sb.subset(sel)
            idx, dist = KnnIndex(pm.positions).query(sub.position, k, threads)
            parts.append(Dataset(build_feature_batch(sub, idx, dist, pm, k), labels[sel], k))
    return Dataset.concat(parts, k)


def _collect_points(scene, n, seed, threads):
    """Exactly ``n`` valid shading points (rays that miss or end on a light are redrawn)."""
    got, have, round_ = [], 0, 0
    while have < n:
        pts = random_shading_points(scene, max(2 * (n - have), 64), sub_seed(seed, round_), threads)
        b = pts.batch(scene)
        got.append(b)
        have += len(b)
        round_ += 1
        if round_ > 50:
            raise DatasetError("camera sees almost no diffuse surface")
    return ShadingBatch(*(np.concatenate([getattr(g, f) for g in got])[:n]
                          for f in ("position", "normal", "wo", "albedo")))
