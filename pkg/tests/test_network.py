import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepkpm.errors import NumericError, ShapeMismatchError
from deepkpm.network import LAYOUT, N_PARAMS, NetParams, backward, forward, forward_direct, run, softplus
from deepkpm.training import batch_loss

import gradcheck

LN2 = math.log(2.0)


def test_parameter_count():
    expect = 12 * 64 + 64 + 64 * 64 + 64 + 128 * 64 + 64 + 64 * 3 + 3 + 64 * 64 + 64 + 64 * 3 + 3
    assert N_PARAMS == expect == 17798
    assert NetParams.zeros().flat().size == N_PARAMS


def test_zero_network_kernel_head(rng):
    x, c = rng.normal(size=(9, 12)), rng.random((9, 3))
    L, _ = forward(NetParams.zeros(), x, c, np.ones(9))
    assert np.allclose(L, LN2 * c.sum(axis=0), rtol=1e-15)


def test_zero_network_direct_head(rng):
    L, _ = forward_direct(NetParams.zeros(), rng.normal(size=(9, 12)), np.ones(9))
    assert np.allclose(L, LN2, rtol=1e-15)


def test_he_uniform_bounds_and_determinism():
    a, b = NetParams.he_uniform(3), NetParams.he_uniform(3)
    assert a == b and not a == NetParams.he_uniform(4)
    for name, shape in LAYOUT:
        if name.endswith(".W"):
            bound = math.sqrt(6 / shape[0])
            assert np.abs(a[name]).max() <= bound
            assert np.abs(a[name]).max() > 0.8 * bound
        else:
            assert np.all(a[name] == 0)


@pytest.mark.parametrize("head", ["kernel", "direct"])
def test_permutation_invariance(head, rng):
    p = NetParams.he_uniform(11)
    for _ in range(10):
        k = int(rng.integers(2, 40))
        x, c, m = rng.normal(size=(k, 12)), rng.random((k, 3)), (rng.random(k) > 0.2).astype(float)
        m[0] = 1
        perm = rng.permutation(k)
        a, _ = run(p, head, x, c, m)
        b, _ = run(p, head, x[perm], c[perm], m[perm])
        assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("head", ["kernel", "direct"])
def test_padding_changes_nothing(head, rng):
    p = NetParams.he_uniform(12)
    x, c, m = rng.normal(size=(2, 10, 12)), rng.random((2, 10, 3)), np.ones((2, 10))
    ref = rng.random((2, 3))
    xp = np.concatenate([x, np.zeros((2, 5, 12))], axis=1)
    cp = np.concatenate([c, np.zeros((2, 5, 3))], axis=1)
    mp = np.concatenate([m, np.zeros((2, 5))], axis=1)
    a, ca = run(p, head, x, c, m)
    b, cb = run(p, head, xp, cp, mp)
    assert np.max(np.abs(a - b)) < 1e-12
    ga = backward(ca, batch_loss(a, ref)[1]).flat()
    gb = backward(cb, batch_loss(b, ref)[1]).flat()
    assert np.max(np.abs(ga - gb)) < 1e-12


def test_masked_rows_get_no_gradient(rng):
    # garbage features on masked rows must not leak into gradients
    p = NetParams.he_uniform(13)
    x, c, m = rng.normal(size=(1, 8, 12)), rng.random((1, 8, 3)), np.ones((1, 8))
    m[0, 5:] = 0
    ref = rng.random((1, 3))
    a, ca = forward(p, x, c, m)
    x2, c2 = x.copy(), c.copy()
    x2[0, 5:] = rng.normal(size=(3, 12)) * 10
    c2[0, 5:] = 7.0
    b, cb = forward(p, x2, c2, m)
    assert np.array_equal(a, b)
    assert np.array_equal(backward(ca, batch_loss(a, ref)[1]).flat(), backward(cb, batch_loss(b, ref)[1]).flat())


@pytest.mark.parametrize("head", ["kernel", "direct"])
def test_zero_upstream_gives_zero_gradients(head, rng):
    p = NetParams.he_uniform(1)
    _, cache = run(p, head, rng.normal(size=(4, 6, 12)), rng.random((4, 6, 3)), np.ones((4, 6)))
    assert np.all(backward(cache, np.zeros((4, 3))).flat() == 0)


def test_backward_shape_mismatch(rng):
    _, cache = forward(NetParams.zeros(), rng.normal(size=(4, 6, 12)), rng.random((4, 6, 3)), np.ones((4, 6)))
    with pytest.raises(ShapeMismatchError):
        backward(cache, np.zeros((3, 3)))
    with pytest.raises(ShapeMismatchError):
        forward(NetParams.zeros(), np.zeros((5, 11)), np.zeros((5, 3)), np.ones(5))


def test_non_finite_activation_names_layer():
    x = np.zeros((3, 12))
    x[1, 2] = np.inf
    with pytest.raises(NumericError) as e:
        forward(NetParams.he_uniform(0), x, np.ones((3, 3)), np.ones(3))
    assert e.value.layer == "enc1"


@pytest.mark.parametrize("head", ["kernel", "direct"])
def test_gradients_match_finite_differences(head):
    problems, rng = gradcheck.draws(77 if head == "kernel" else 78, head, 3)
    for prob in problems:
        assert gradcheck.check(prob[0], head, *prob[1:], rng) < 1e-6


@given(st.integers(0, 2 ** 31))
@settings(max_examples=25, deadline=None)
def test_nonnegative_outputs(seed):
    rng = np.random.default_rng(seed)
    p = NetParams.he_uniform(seed).map(lambda a: a * 3)
    x, c = rng.normal(size=(2, 5, 12)), rng.random((2, 5, 3))
    for head in ("kernel", "direct"):
        L, _ = run(p, head, x, c, np.ones((2, 5)))
        assert np.all(L >= 0)


def test_softplus_stable():
    assert softplus(np.array([-1000.0]))[0] == 0.0
    assert softplus(np.array([1000.0]))[0] == 1000.0
    assert softplus(np.array([0.0]))[0] == LN2
