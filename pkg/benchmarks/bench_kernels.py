"""Compare the compiled and pure-Python kernels on the bundled caustic scene.

    python benchmarks/bench_kernels.py [--quick]

Each row reports work items per second for both backends and checks that
their outputs are identical.
"""
import argparse
import dataclasses
import time

import numpy as np

from deepkpm import backend
from deepkpm.density import ShadingBatch
from deepkpm.estimate import ClassicPM, Learned
from deepkpm.knn import KnnIndex
from deepkpm.network import NetParams
from deepkpm.pathtracer import RenderJob, render_pt
from deepkpm.photons import trace_photons
from deepkpm.scene import bundled_scene_path, load_scene
from deepkpm.shading import image_shading_points


def timed(fn):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


def row(name, n, t_c, t_py, same):
    c = f"{n / t_c:12.0f}" if t_c else "         n/a"
    print(f"{name:<22}{c}{n / t_py:12.0f}{(t_py / t_c if t_c else float('nan')):9.1f}x   {'same' if same else 'DIFFERENT'}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    a = ap.parse_args()
    scale = 1 if a.quick else 4
    scene = load_scene(bundled_scene_path("caustic"))
    py, cy = backend.get("python"), backend.ckernels
    print(f"{'kernel':<22}{'cython/s':>12}{'python/s':>12}{'speedup':>10}   outputs")

    n = 5_000 * scale
    a_py, t_py = timed(lambda: trace_photons(scene, n, seed=1, kernels=py))
    a_c, t_c = timed(lambda: trace_photons(scene, n, seed=1, kernels=cy)) if cy else (None, 0)
    row("photon paths", n, t_c, t_py, a_c is None or a_c.equals(a_py))

    small = scene.with_camera(dataclasses.replace(scene.camera, width=16, height=12))
    job = RenderJob(small, spp=4 * scale, seed=1)
    n = 16 * 12 * job.spp
    i_py, t_py = timed(lambda: render_pt(job, kernels=py))
    i_c, t_c = timed(lambda: render_pt(job, kernels=cy)) if cy else (None, 0)
    row("camera paths", n, t_c, t_py, i_c is None or i_c == i_py)

    pts = np.random.default_rng(0).random((50_000, 3))
    q = np.random.default_rng(1).random((500 * scale, 3))
    ix_py, t_py = timed(lambda: KnnIndex(pts, py))
    ix_c, t_c = timed(lambda: KnnIndex(pts, cy)) if cy else (None, 0)
    row("kd build (points)", len(pts), t_c, t_py, ix_c is None or np.array_equal(ix_c.perm, ix_py.perm))
    r_py, t_py = timed(lambda: ix_py.query(q, 50))
    r_c, t_c = timed(lambda: ix_c.query(q, 50)) if cy else (None, 0)
    row("knn queries K=50", len(q), t_c, t_py, r_c is None or np.array_equal(r_c[0], r_py[0]))

    # estimator throughput (numpy only, backend independent)
    pm = trace_photons(scene, 40_000, seed=2)
    sb = image_shading_points(scene).batch(scene)
    index = KnnIndex(pm.positions)
    params = NetParams.he_uniform(0)
    for k in (50, 500):
        nb = index.query(sb.position, k)
        _, t_pm = timed(lambda: ClassicPM(k)(sb, pm, index, neighbors=nb))
        _, t_nn = timed(lambda: Learned(params, k)(sb, pm, index, neighbors=nb))
        print(f"estimate K={k:<4} classic {len(sb) / t_pm:10.0f} pts/s   learned {len(sb) / t_nn:10.0f} pts/s")


if __name__ == "__main__":
    main()
