"""Relative-L2 loss, Adam, and the deterministic training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DatasetError, DivergenceError
from .network import HEADS, NetParams, backward, run

LOSS_EPS = 0.01
CURVE_EVERY = 100


def loss_relative_l2(pred, ref, eps: float = LOSS_EPS) -> float:
    """|pred - ref|^2 / (|ref|^2 + eps) for one RGB pair."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    d = pred - ref
    return float(np.dot(d, d) / (np.dot(ref, ref) + eps))


def batch_loss(pred, ref, eps: float = LOSS_EPS):
    """Mean relative L2 over a batch (B, 3) and its gradient with respect to pred."""
    d = pred - ref
    den = np.sum(ref * ref, axis=1) + eps
    per = np.sum(d * d, axis=1) / den
    b = len(pred)
    return float(per.mean()), 2.0 * d / (den[:, None] * b)


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0.0:
            raise ConfigurationError("Adam lr must be > 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError("Adam betas must lie in [0, 1)")


@dataclass
class AdamState:
    m: dict
    v: dict

    @classmethod
    def fresh(cls, params):
        return cls({n: np.zeros_like(p) for n, p in params.items()},
                   {n: np.zeros_like(p) for n, p in params.items()})


def adam_step(params, grads, state: AdamState, hyper: AdamHyper, step: int):
    """One Adam update; ``step`` counts from 1. Works on NetParams or plain dicts of arrays."""
    if step < 1:
        raise ConfigurationError("Adam step index starts at 1")
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    new = {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        new[name] = p - hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return (NetParams(new) if isinstance(params, NetParams) else new), state


@dataclass(frozen=True)
class TrainConfig:
    k: int = 50
    batch_size: int = 32
    steps: int = 10_000
    adam: AdamHyper = field(default_factory=AdamHyper)
    loss_eps: float = LOSS_EPS
    seed: int = 0
    head: str = "kernel"
    dataset_paths: tuple = ()

    def __post_init__(self):
        if self.head not in HEADS:
            raise ConfigurationError(f"head must be one of {HEADS}")
        if self.k < 1 or self.batch_size < 1 or self.steps < 0:
            raise ConfigurationError("k and batch_size must be >= 1, steps >= 0")
        if not self.loss_eps > 0.0:
            raise ConfigurationError("loss epsilon must be > 0")


def batch_order(n: int, batch_size: int, steps: int, seed: int):
    """Yield index arrays for each step: a fresh permutation per epoch from stream (seed, epoch)."""
    perm, pos, epoch = None, n, 0
    for _ in range(steps):
        take, got = [], 0
        while got < batch_size:
            if pos >= n:
                rng = np.random.Generator(np.random.Philox(key=[int(seed) & (2 ** 64 - 1), 0xBA7C0000 + epoch]))
                perm, pos, epoch = rng.permutation(n), 0, epoch + 1
            j = min(n - pos, batch_size - got)
            take.append(perm[pos:pos + j])
            pos, got = pos + j, got + j
        yield np.concatenate(take)


@dataclass
class TrainResult:
    params: NetParams
    curve: list  # (step, mean loss over the preceding window)
    config: TrainConfig

    @property
    def final_loss(self):
        return self.curve[-1][1] if self.curve else math.nan


def train(config: TrainConfig, dataset, init: NetParams | None = None, progress=None) -> TrainResult:
    """Minibatch Adam on the relative L2 loss; fully determined by (config, dataset)."""
    if len(dataset) == 0:
        raise DatasetError("training set is empty")
    if dataset.k != config.k:
        raise ConfigurationError(f"dataset K={dataset.k} does not match config K={config.k}")
    params = init.copy() if init is not None else NetParams.he_uniform(config.seed)
    state = AdamState.fresh(params)
    curve, window = [], []
    bs = min(config.batch_size, len(dataset))
    for step, sel in enumerate(batch_order(len(dataset), bs, config.steps, config.seed), start=1):
        fb = dataset.inputs[sel]
        ref = dataset.reference[sel]
        pred, cache = run(params, config.head, fb.features, fb.contributions, fb.mask)
        with np.errstate(invalid="ignore", over="ignore"):
            loss, dpred = batch_loss(pred, ref, config.loss_eps)
        if not math.isfinite(loss):
            raise DivergenceError(step, loss)
        grads = backward(cache, dpred)
        params, state = adam_step(params, grads, state, config.adam, step)
        window.append(loss)
        if step % CURVE_EVERY == 0 or step == config.steps:
            curve.append((step, float(np.mean(window))))
            window = []
            if progress is not None:
                progress(step, curve[-1][1])
    return TrainResult(params, curve, config)
