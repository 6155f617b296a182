"""Kernel-prediction network in numpy float64 with hand-written reverse mode.

Shared per-photon encoder 12 -> 64 -> 64 (ReLU), masked max-pool to a
64-d context, then either

* kernel head: [row code, context] 128 -> 64 -> 3, softplus weights w_t,
  L = sum_t mask_t * w_t * c_t, or
* direct head: context 64 -> 64 -> 3, L = softplus(.).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeMismatchError
from .features import FEATURE_DIM

HIDDEN = 64
HEADS = ("kernel", "direct")

# (name, shape) in declaration order; this is also the checkpoint blob order
LAYOUT = (
    ("enc1.W", (FEATURE_DIM, HIDDEN)), ("enc1.b", (HIDDEN,)),
    ("enc2.W", (HIDDEN, HIDDEN)), ("enc2.b", (HIDDEN,)),
    ("ker1.W", (2 * HIDDEN, HIDDEN)), ("ker1.b", (HIDDEN,)),
    ("ker2.W", (HIDDEN, 3)), ("ker2.b", (3,)),
    ("dir1.W", (HIDDEN, HIDDEN)), ("dir1.b", (HIDDEN,)),
    ("dir2.W", (HIDDEN, 3)), ("dir2.b", (3,)),
)
N_PARAMS = sum(int(np.prod(s)) for _, s in LAYOUT)


class NetParams:
    """Ordered dict-like container of float64 tensors following LAYOUT."""

    def __init__(self, tensors: dict):
        if list(tensors) != [n for n, _ in LAYOUT]:
            raise ShapeMismatchError("parameter names/order do not match the network layout")
        for name, shape in LAYOUT:
            if tensors[name].shape != shape:
                raise ShapeMismatchError(f"{name}: expected {shape}, got {tensors[name].shape}")
        self.t = {n: np.asarray(v, dtype=np.float64) for n, v in tensors.items()}

    def __getitem__(self, name):
        return self.t[name]

    def __iter__(self):
        return iter(self.t)

    def items(self):
        return self.t.items()

    @classmethod
    def zeros(cls):
        return cls({n: np.zeros(s) for n, s in LAYOUT})

    @classmethod
    def he_uniform(cls, seed: int):
        """Weights U(-sqrt(6/fan_in), +sqrt(6/fan_in)) from a stream per (seed, layer); zero biases."""
        t = {}
        for layer, (name, shape) in enumerate(LAYOUT):
            if name.endswith(".b"):
                t[name] = np.zeros(shape)
                continue
            rng = np.random.Generator(np.random.Philox(key=[int(seed) & (2 ** 64 - 1), 0x4E4E0000 + layer]))
            bound = np.sqrt(6.0 / shape[0])
            t[name] = rng.uniform(-bound, bound, size=shape)
        return cls(t)

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.t.values()])

    @classmethod
    def from_flat(cls, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != N_PARAMS:
            raise ShapeMismatchError(f"expected {N_PARAMS} parameters, got {vec.size}")
        t, o = {}, 0
        for name, shape in LAYOUT:
            n = int(np.prod(shape))
            t[name] = vec[o:o + n].reshape(shape).copy()
            o += n
        return cls(t)

    def copy(self):
        return NetParams({n: v.copy() for n, v in self.t.items()})

    def map(self, fn):
        return NetParams({n: fn(v) for n, v in self.t.items()})

    def __eq__(self, other):
        return isinstance(other, NetParams) and all(np.array_equal(self[n], other[n]) for n in self)


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check(name, x):
    if not np.all(np.isfinite(x)):
        raise NumericError(name)
    return x


def _as_batch(features, mask, contributions=None):
    f = np.asarray(features, dtype=np.float64)
    single = f.ndim == 2
    if single:
        f = f[None]
    m = np.asarray(mask, dtype=np.float64).reshape(f.shape[:2])
    if f.shape[2] != FEATURE_DIM:
        raise ShapeMismatchError(f"feature rows must have {FEATURE_DIM} entries, got {f.shape[2]}")
    c = None
    if contributions is not None:
        c = np.asarray(contributions, dtype=np.float64)
        c = c[None] if single else c
        if c.shape != f.shape[:2] + (3,):
            raise ShapeMismatchError(f"contributions {c.shape} do not match features {f.shape}")
    return f, m, c, single


def _encode(p, x, m):
    a1 = _check("enc1", x @ p["enc1.W"] + p["enc1.b"])
    h1 = np.maximum(a1, 0.0)
    a2 = _check("enc2", h1 @ p["enc2.W"] + p["enc2.b"])
    h2 = np.maximum(a2, 0.0)
    valid = m > 0.0
    pooled = np.where(valid[..., None], h2, -np.inf)
    arg = np.argmax(pooled, axis=1)  # (B, 64), first index on ties
    ctx = np.take_along_axis(h2, arg[:, None, :], axis=1)[:, 0, :]
    ctx = np.where(valid.any(axis=1)[:, None], ctx, 0.0)
    return dict(x=x, m=m, a1=a1, h1=h1, a2=a2, h2=h2, arg=arg, ctx=ctx, valid=valid)


@dataclass
class Cache:
    head: str
    single: bool
    params: NetParams
    v: dict


def forward(params: NetParams, features, contributions, mask):
    """Kernel-prediction estimate. Accepts one point (K, .) or a batch (B, K, .)."""
    x, m, c, single = _as_batch(features, mask, contributions)
    v = _encode(params, x, m)
    hid = HIDDEN
    r = v["h2"] @ params["ker1.W"][:hid] + (v["ctx"] @ params["ker1.W"][hid:])[:, None, :] + params["ker1.b"]
    g1 = np.maximum(_check("ker1", r), 0.0)
    o = _check("ker2", g1 @ params["ker2.W"] + params["ker2.b"])
    w = softplus(o)
    L = np.einsum("bk,bkc->bc", m, w * c)
    v.update(c=c, r=r, g1=g1, o=o, w=w)
    return (L[0] if single else L), Cache("kernel", single, params, v)


def forward_direct(params: NetParams, features, mask):
    """Direct-estimation ablation: radiance regressed from the context vector alone."""
    x, m, _, single = _as_batch(features, mask)
    v = _encode(params, x, m)
    r = _check("dir1", v["ctx"] @ params["dir1.W"] + params["dir1.b"])
    d1 = np.maximum(r, 0.0)
    o = _check("dir2", d1 @ params["dir2.W"] + params["dir2.b"])
    L = softplus(o)
    v.update(r=r, d1=d1, o=o)
    return (L[0] if single else L), Cache("direct", single, params, v)


def run(params, head, features, contributions, mask):
    if head == "kernel":
        return forward(params, features, contributions, mask)
    if head == "direct":
        return forward_direct(params, features, mask)
    raise ValueError(f"unknown head {head!r}")


def backward(cache: Cache, upstream) -> NetParams:
    """Gradients of sum(upstream * L) with respect to every parameter."""
    v = cache.v
    g = np.asarray(upstream, dtype=np.float64)
    g = g[None] if cache.single else g
    if g.shape != v["ctx"].shape[:1] + (3,):
        raise ShapeMismatchError(f"upstream gradient {g.shape} does not match output")
    grads = {n: np.zeros(s) for n, s in LAYOUT}
    hid = HIDDEN
    if cache.head == "kernel":
        m, c = v["m"], v["c"]
        d_o = (m[..., None] * c * g[:, None, :]) * sigmoid(v["o"])  # (B, K, 3)
        grads["ker2.W"] = np.einsum("bkh,bkc->hc", v["g1"], d_o)
        grads["ker2.b"] = d_o.sum(axis=(0, 1))
        d_r = (d_o @ cache.params["ker2.W"].T) * (v["r"] > 0.0)
        grads["ker1.W"][:hid] = np.einsum("bki,bkh->ih", v["h2"], d_r)
        d_rs = d_r.sum(axis=1)  # (B, 64)
        grads["ker1.W"][hid:] = v["ctx"].T @ d_rs
        grads["ker1.b"] = d_rs.sum(axis=0)
        d_h2 = d_r @ cache.params["ker1.W"][:hid].T
        d_ctx = d_rs @ cache.params["ker1.W"][hid:].T
    else:
        d_o = g * sigmoid(v["o"])
        grads["dir2.W"] = v["d1"].T @ d_o
        grads["dir2.b"] = d_o.sum(axis=0)
        d_r = (d_o @ cache.params["dir2.W"].T) * (v["r"] > 0.0)
        grads["dir1.W"] = v["ctx"].T @ d_r
        grads["dir1.b"] = d_r.sum(axis=0)
        d_ctx = d_r @ cache.params["dir1.W"].T
        d_h2 = np.zeros_like(v["h2"])
    # route the pooled gradient to the argmax row of each channel
    d_ctx = np.where(v["valid"].any(axis=1)[:, None], d_ctx, 0.0)
    b_idx = np.arange(d_h2.shape[0])[:, None]
    ch = np.arange(d_h2.shape[2])[None, :]
    np.add.at(d_h2, (b_idx, v["arg"], ch), d_ctx)
    d_a2 = d_h2 * (v["a2"] > 0.0)
    grads["enc2.W"] = np.einsum("bki,bkh->ih", v["h1"], d_a2)
    grads["enc2.b"] = d_a2.sum(axis=(0, 1))
    d_a1 = (d_a2 @ cache.params["enc2.W"].T) * (v["a1"] > 0.0)
    grads["enc1.W"] = np.einsum("bki,bkh->ih", v["x"], d_a1)
    grads["enc1.b"] = d_a1.sum(axis=(0, 1))
    return NetParams(grads)
