"""Counter-based random streams.

A stream is addressed by ``(seed, domain, a, b)``, e.g. ``(seed, PHOTON, path, 0)``
or ``(seed, CAMERA, pixel, sample)``. Draws depend only on that address and on
the draw index, never on thread scheduling. The compiled kernels implement
the same arithmetic on ``uint64_t``.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
KEY_A = 0xD1B54A32D192ED03
KEY_B = 0xAEF17502108EF2D9
INV_2_53 = 1.0 / 9007199254740992.0

# stream domains
PHOTON = 1
CAMERA = 2
SHADING = 3
DERIVED = 4  # sub-seeds for photon maps and datasets


def mix64(z):
    """splitmix64 finalizer."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_state(seed, domain, a, b=0):
    s = mix64((seed & MASK64) ^ (((domain + 1) * GOLDEN) & MASK64))
    s = mix64(s ^ (((a + 1) * KEY_A) & MASK64))
    return mix64(s ^ (((b + 1) * KEY_B) & MASK64))


class Stream:
    """Sequential uniform draws from one counter-based stream."""

    __slots__ = ("state",)

    def __init__(self, seed, domain, a, b=0):
        self.state = stream_state(seed, domain, a, b)

    def next_u64(self):
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self):
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * INV_2_53
