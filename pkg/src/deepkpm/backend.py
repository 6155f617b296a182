"""Kernel backend selection.

The compiled extension is used when it imports; set ``DEEPKPM_PURE_PYTHON=1``
to force the pure-Python kernels. Both produce identical numbers.
"""
import os
from concurrent.futures import ThreadPoolExecutor

from . import _pykernels

pykernels = _pykernels

try:
    from . import _kernels as ckernels
except ImportError:  # extension not built
    ckernels = None

if ckernels is not None and not os.environ.get("DEEPKPM_PURE_PYTHON"):
    kernels = ckernels
else:
    kernels = _pykernels

NAME = kernels.NAME


def get(name=None):
    """Return the kernel module by name ("cython" / "python"), default the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        if ckernels is None:
            raise RuntimeError("compiled kernels are not available; build with `pip install -e .`")
        return ckernels
    raise ValueError(f"unknown backend {name!r}")


def chunks(n, size):
    """Fixed [start, end) ranges; independent of the worker count."""
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def run_chunks(fn, ranges, threads=1):
    """Call ``fn(start, end)`` per range; results come back in range order."""
    if threads <= 1 or len(ranges) <= 1:
        return [fn(a, b) for a, b in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))
