import numpy as np
import pytest

from deepkpm.dataset import Dataset, make_training_set, sub_seed
from deepkpm.errors import DatasetError
from deepkpm.estimate import ClassicPM
from deepkpm.knn import KnnIndex
from deepkpm.photons import trace_photons
from deepkpm.shading import random_shading_points


def test_no_points_gives_empty(caustic):
    ds = make_training_set([caustic], 1000, 0, 50, seed=1)
    assert len(ds) == 0 and ds.inputs.features.shape == (0, 50, 12)


def test_sub_seeds_differ():
    seen = {sub_seed(3, a, b) for a in range(4) for b in range(4)} | {sub_seed(3, 0, 2, g) for g in range(8)}
    assert len(seen) == 24
    assert sub_seed(3, 1, 2) == sub_seed(3, 1, 2)


def test_constructive_postconditions(caustic, tmp_path):
    ds = make_training_set([caustic], [2000, 4000], 60, 50, seed=2, maps_per_scene=4, maps_per_point=2,
                           ref_factor=20)
    assert len(ds) == 120
    assert np.all(ds.reference >= 0)
    assert np.all(ds.inputs.mask.sum(axis=1) >= 1)
    assert np.all(ds.inputs.contributions >= 0)
    ds.save(tmp_path / "d.npz")
    back = Dataset.load(tmp_path / "d.npz")
    assert np.array_equal(back.inputs.features, ds.inputs.features) and back.k == 50
    again = make_training_set([caustic], [2000, 4000], 60, 50, seed=2, maps_per_scene=4, maps_per_point=2,
                              ref_factor=20)
    assert np.array_equal(again.inputs.features, ds.inputs.features)
    assert np.array_equal(again.reference, ds.reference)


def test_scene_without_ls_photons_is_skipped(diffuse, caustic, caplog):
    ds = make_training_set([diffuse, caustic], 2000, 10, 8, seed=1, maps_per_scene=2, ref_factor=10)
    assert len(ds) == 10
    assert "no LS photons" in caplog.text


def test_bad_arguments(caustic, tmp_path):
    with pytest.raises(DatasetError):
        make_training_set([caustic], 1000, 10, 8, seed=1, maps_per_scene=2, maps_per_point=3)
    with pytest.raises(DatasetError):
        make_training_set([caustic], [1000, 0], 10, 8, seed=1)
    with pytest.raises(DatasetError):
        Dataset.load(tmp_path / "missing.npz")


def test_labels_consistent_with_denser_pm(caustic):
    """Mean label over samples is within 3 sigma of classic PM at 10x photons on the same points."""
    n = 2000
    ds = make_training_set([caustic], n, 400, 50, seed=9, maps_per_scene=1, ref_factor=100)
    sb = random_shading_points(caustic, 1000, sub_seed(sub_seed(9, 0, 1), 0)).batch(caustic)
    # same points the builder drew (first 400 valid ones)
    sb = type(sb)(*(getattr(sb, f)[:400] for f in ("position", "normal", "wo", "albedo")))
    pm = trace_photons(caustic, 10 * n, seed=77)
    est = ClassicPM(50)(sb, pm, KnnIndex(pm.positions))
    diff = ds.reference.mean(1) - est.mean(1)
    assert abs(diff.mean()) < 3 * diff.std(ddof=1) / np.sqrt(len(diff))
