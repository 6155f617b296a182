"""The (K, M) evaluation grid: learned vs classic PM on a shared set of shading points."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .density import EPANECHNIKOV, KernelKind
from .estimate import ClassicPM, Learned, ls_layer, shading_grid
from .image import Image, check_same_shape
from .knn import KnnIndex
from .metrics import psnr, rmse, ssim
from .photons import PhotonMap
from .scene import Scene

HEADER = ("K", "M", "method", "rmse", "psnr", "ssim")
METHODS = ("ours", "pm")


@dataclass(frozen=True)
class EvalRow:
    k: int
    m: int
    method: str
    rmse: float
    psnr: float
    ssim: float
    present: bool = True


@dataclass
class EvalTable:
    rows: list = field(default_factory=list)

    def get(self, k, m, method):
        for r in self.rows:
            if (r.k, r.m, r.method) == (k, m, method):
                return r
        raise KeyError((k, m, method))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.rows:
            if r.present:
                w.writerow([r.k, r.m, r.method, repr(r.rmse), _fmt(r.psnr), repr(r.ssim)])
            else:
                w.writerow([r.k, r.m, r.method, "absent", "absent", "absent"])
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as f:
            f.write(self.to_csv())


def _fmt(x):
    return "inf" if math.isinf(x) else repr(x)


def eval_grid(scene: Scene, ks, photon_maps, checkpoints: dict, reference: Image, methods=METHODS,
              kind: KernelKind = EPANECHNIKOV, seed: int = 0, threads: int = 1, images: dict | None = None,
              points=None) -> EvalTable:
    """One row per (K, photon map, method).

    ``photon_maps`` is a list of PhotonMaps (the M axis; rows report each map's
    valid photon count). ``checkpoints`` maps K to (params, head); a missing K
    marks its "ours" cells absent. ``reference`` is the converged LS layer
    rendered at the same shading points (pixel centers with ``seed``).
    ``images``, when given, receives every rendered layer keyed by (K, M, method).
    """
    if points is None:
        points = shading_grid(scene, seed, 1, threads)
    sb = points.batch(scene)
    table = EvalTable()
    for pm in photon_maps:
        index = KnnIndex(pm.positions) if pm.m_valid else None
        for k in ks:
            neighbors = index.query(sb.position, k, threads) if index is not None and len(sb) else None
            for method in methods:
                if method == "pm":
                    est = ClassicPM(k, kind)
                elif k in checkpoints:
                    params, head = checkpoints[k]
                    est = Learned(params, k, head)
                else:
                    table.rows.append(EvalRow(k, pm.m_valid, method, math.nan, math.nan, math.nan, False))
                    continue
                img = _layer(scene, points, sb, pm, index, est, neighbors, threads)
                check_same_shape(img, reference)
                if images is not None:
                    images[(k, pm.m_valid, method)] = img
                table.rows.append(EvalRow(k, pm.m_valid, method, rmse(img, reference), psnr(img, reference),
                                          ssim(img, reference)))
    return table


def _layer(scene, points, sb, pm: PhotonMap, index, est, neighbors, threads):
    if neighbors is None:
        return ls_layer(scene, points, np.zeros((len(sb), 3)))
    idx, dist = neighbors
    n = min(est.k, pm.m_valid)
    return ls_layer(scene, points, est(sb, pm, index, threads, (idx[:, :n], dist[:, :n])))
