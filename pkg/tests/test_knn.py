import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from deepkpm import backend
from deepkpm.errors import QueryError
from deepkpm.knn import KnnIndex, build, knn, knn_linear


def test_single_point():
    ix = build([[0.0, 0.0, 2.0]])
    assert ix.depth == 0
    nb = knn(ix, (0, 0, 0), 1)
    assert list(nb.indices) == [0] and nb.r_k == 2.0 and not nb.short


def test_duplicates_keep_distinct_ids():
    ix = build(np.zeros((20, 3)))
    nb = knn(ix, (0, 0, 0), 20)
    assert sorted(nb.indices) == list(range(20))
    assert list(nb.indices) == list(range(20))  # ties by ascending id


def test_k_equals_m_and_short():
    pts = np.random.default_rng(0).random((37, 3))
    nb = knn(build(pts), (0.5, 0.5, 0.5), 37)
    assert len(nb) == 37 and np.all(np.diff(nb.distances) >= 0)
    nb = knn(build(pts), (0.5, 0.5, 0.5), 100)
    assert len(nb) == 37 and nb.short and nb.r_k == nb.distances[-1]


def test_empty_index_query_errors():
    ix = build(np.zeros((0, 3)))
    assert len(ix) == 0
    with pytest.raises(QueryError):
        knn(ix, (0, 0, 0), 1)


def test_seed42_sweep_matches_linear_scan():
    rng = np.random.default_rng(42)
    pts = rng.random((100, 3))
    ix = build(pts)
    for k in (1, 5, 100):
        idx, d = ix.query(pts, k)
        for i, q in enumerate(pts):
            li, ld = knn_linear(pts, q, k)
            assert np.array_equal(idx[i], li) and np.array_equal(d[i], ld)


@pytest.mark.parametrize("name", ["python", "cython"])
def test_uniform_cube_oracle(name):
    if name == "cython" and backend.ckernels is None:
        pytest.skip("extension not built")
    rng = np.random.default_rng(7)
    pts, qs = rng.random((1000, 3)), rng.random((100, 3))
    ix = KnnIndex(pts, backend.get(name))
    for k in (1, 8, 50):
        idx, _ = ix.query(qs, k)
        for i, q in enumerate(qs):
            assert np.array_equal(idx[i], knn_linear(pts, q, k)[0])


coords = st.floats(-4, 4, allow_nan=False, width=32)


@given(arrays(np.float64, st.tuples(st.integers(1, 60), st.just(3)), elements=coords),
       arrays(np.float64, (3,), elements=coords), st.integers(1, 70))
@settings(max_examples=150, deadline=None)
def test_exactness_property(pts, q, k):
    # coarse float32 grid coordinates produce many exact distance ties
    pts = np.round(pts, 1)
    idx, d = build(pts).query(q[None], k)
    li, ld = knn_linear(pts, q, k)
    assert np.array_equal(idx[0], li)
    assert np.array_equal(d[0], ld)


def test_structure_contains_all_points():
    pts = np.random.default_rng(3).random((1234, 3))
    ix = build(pts)
    assert sorted(ix.perm) == list(range(1234))
    assert ix.axis.max() <= 2


def test_visited_fraction_sublinear():
    # Average leaf points examined per query grows much slower than M
    rng = np.random.default_rng(4)
    from deepkpm import _pykernels as pk
    counts = {}
    for m in (2_000, 20_000):
        pts = rng.random((m, 3))
        ix = KnnIndex(pts, pk)
        q = rng.random((20, 3))
        seen = 0
        for qq in q:
            seen += pk.kd_visit_count(pts, ix.perm, ix.axis, ix.split, qq, 50)
        counts[m] = seen / len(q)
    assert counts[20_000] < 4 * counts[2_000]
