from hypothesis import given, strategies as st

from deepkpm import rng

U64 = st.integers(0, 2 ** 64 - 1)


def test_mix64_reference_values():
    # splitmix64 finalizer applied to the first outputs of the canonical splitmix64(0) sequence
    assert rng.mix64(rng.GOLDEN) == 0xE220A8397B1DCDAF
    assert rng.mix64((2 * rng.GOLDEN) & rng.MASK64) == 0x6E789E6AA1B965F4


@given(U64, st.integers(0, 8), st.integers(0, 2 ** 40), st.integers(0, 2 ** 20))
def test_uniform_in_unit_interval(seed, dom, a, b):
    s = rng.Stream(seed, dom, a, b)
    for _ in range(4):
        u = s.uniform()
        assert 0.0 <= u < 1.0


@given(U64, st.integers(0, 2 ** 30))
def test_streams_are_addressable(seed, a):
    x = [rng.Stream(seed, rng.PHOTON, a).uniform() for _ in range(2)]
    assert x[0] == x[1]
    assert rng.stream_state(seed, rng.PHOTON, a) != rng.stream_state(seed, rng.CAMERA, a)
    assert rng.stream_state(seed, rng.PHOTON, a) != rng.stream_state(seed, rng.PHOTON, a + 1)
