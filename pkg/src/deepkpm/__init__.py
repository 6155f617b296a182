"""Photon density estimation with learned per-photon kernels, plus a path tracer for the remaining transport."""

__version__ = "0.1.0"
