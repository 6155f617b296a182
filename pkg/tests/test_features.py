import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepkpm.density import ShadingBatch, ShadingPoint
from deepkpm.errors import EstimationError
from deepkpm.features import FEATURE_DIM, build_feature_batch, build_features, onb, to_local
from deepkpm.knn import KnnIndex, knn
from deepkpm.photons import PhotonMap
from deepkpm.scene import Material

UP = np.array([0.0, 0.0, 1.0])
WHITE = Material.lambertian((1.0, 1.0, 1.0))


def pmap(pos, inc=None, power=(1.0, 1.0, 1.0)):
    pos = np.asarray(pos, dtype=np.float64)
    m = len(pos)
    inc = np.tile(UP, (m, 1)) if inc is None else np.asarray(inc, dtype=np.float64)
    return PhotonMap(pos, inc, np.tile(power, (m, 1)), np.tile(UP, (m, 1)), np.full(m, 2), 100)


def test_photon_at_shading_point_and_farthest_row():
    pm = pmap([[0, 0, 0], [0.5, 0, 0], [0, 2, 0]])
    sp = ShadingPoint(np.zeros(3), UP, UP, WHITE)
    f, c, m = build_features(sp, knn(KnnIndex(pm.positions), sp.position, 3), pm, 5)
    assert f.shape == (5, FEATURE_DIM) and c.shape == (5, 3)
    assert np.all(f[0, 0:3] == 0) and f[0, 7] == 0
    assert f[2, 7] == 1.0
    assert np.allclose(np.linalg.norm(f[2, 0:3]), 1.0)
    assert list(m) == [1, 1, 1, 0, 0]
    assert np.all(f[3:] == 0) and np.all(c[3:] == 0)


def test_local_frame_examples():
    assert np.allclose(to_local(np.array([[1.0, 0, 0]]), UP), [[1, 0, 0]])
    # n = x axis: the basis rule gives t = (0, 0, -1), b = (0, 1, 0) (hand-applied)
    n = np.array([1.0, 0.0, 0.0])
    t, b = onb(n)
    assert np.allclose(t, [0, 0, -1]) and np.allclose(b, [0, 1, 0])
    assert np.allclose(to_local(np.array([[0.0, 0, 1]]), n), [[-1, 0, 0]])
    assert np.allclose(to_local(np.array([[1.0, 0, 0]]), n), [[0, 0, 1]])


@given(st.tuples(*[st.floats(-1, 1)] * 3))
def test_onb_orthonormal(v):
    n = np.array(v)
    if np.linalg.norm(n) < 1e-3:
        return
    n /= np.linalg.norm(n)
    t, b = onb(n)
    m = np.stack([t, b, n])
    assert np.allclose(m @ m.T, np.eye(3), atol=1e-12)


def test_feature_columns():
    inc = np.array([[0.6, 0.0, 0.8]])
    pm = PhotonMap([[0.3, 0.4, 0.0]], inc, [[2.0, 1.0, 0.5]], [[0.0, 0.0, 1.0]], [2], 10)
    sb = ShadingBatch(np.zeros((1, 3)), UP[None], UP[None], np.array([[0.5, 0.5, 0.5]]))
    fb = build_feature_batch(sb, np.array([[0]]), np.array([[0.5]]), pm, 2)
    f = fb.features[0, 0]
    assert np.allclose(f[0:3], [0.6, 0.8, 0.0])
    assert np.allclose(f[3:6], [0.6, 0.0, 0.8], atol=1e-7)
    assert f[6] == pytest.approx(1.0) and f[7] == pytest.approx(1.0)
    lum = 0.2126 * 2 + 0.7152 * 1 + 0.0722 * 0.5
    assert f[8] == pytest.approx(math.log1p(lum * 1))
    assert np.allclose(f[9:12], np.array([2.0, 1.0, 0.5]) / lum)
    assert np.allclose(fb.contributions[0, 0], 0.5 / math.pi * np.array([2.0, 1.0, 0.5]) / (math.pi * 0.25))


def test_view_direction_not_in_features(caustic_photons):
    pm = caustic_photons
    ix = KnnIndex(pm.positions)
    pos = pm.positions[:10].astype(np.float64) + 0.01
    n = np.tile(UP, (10, 1))
    idx, dist = ix.query(pos, 50)
    a = build_feature_batch(ShadingBatch(pos, n, n, np.full((10, 3), 0.8)), idx, dist, pm, 50)
    wo = np.tile([0.6, 0.0, 0.8], (10, 1))
    b = build_feature_batch(ShadingBatch(pos, n, wo, np.full((10, 3), 0.8)), idx, dist, pm, 50)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.contributions, b.contributions)


def test_empty_neighborhood_errors():
    sb = ShadingBatch(np.zeros((1, 3)), UP[None], UP[None], np.ones((1, 3)))
    with pytest.raises(EstimationError):
        build_feature_batch(sb, np.zeros((1, 0), dtype=int), np.zeros((1, 0)), pmap([[0, 0, 0]]), 4)
