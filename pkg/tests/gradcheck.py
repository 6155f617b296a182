"""Central finite-difference gradient checking shared by unit and acceptance tests."""
import numpy as np

from deepkpm.network import HIDDEN, LAYOUT, NetParams, backward, run
from deepkpm.training import batch_loss

STEP = 1e-5
KINK_MARGIN = 2e-4


def random_problem(rng, b=3, k=7, pad=2):
    """Random parameters and inputs; the last ``pad`` rows of every sample are padding."""
    p = NetParams.he_uniform(int(rng.integers(2 ** 31))).map(lambda a: a + rng.normal(0, 0.1, a.shape))
    x = rng.normal(size=(b, k, 12))
    c = rng.random((b, k, 3))
    m = np.ones((b, k))
    m[:, k - pad:] = 0.0
    x[:, k - pad:] = 0.0
    c[:, k - pad:] = 0.0
    ref = rng.random((b, 3)) * 2
    return p, x, c, m, ref


def smooth_enough(p, head, x, c, m):
    """False when a ReLU input or a max-pool margin is within reach of the FD step (kinks break FD)."""
    _, cache = run(p, head, x, c, m)
    v = cache.v
    valid = m > 0
    pre = [v["a1"][valid], v["a2"][valid]]
    pre.append(v["r"][valid] if head == "kernel" else v["r"])
    if any(np.min(np.abs(a)) < KINK_MARGIN for a in pre):
        return False
    h2 = np.where(valid[..., None], v["h2"], -np.inf)
    top2 = np.sort(h2, axis=1)[:, -2:, :]
    gap = top2[:, 1, :] - top2[:, 0, :]
    live = top2[:, 1, :] > 0.0  # all-zero channels are flat: every a2 is already clear of the kink
    return bool(np.all(gap[live & np.isfinite(gap)] > KINK_MARGIN))


def loss_and_grad(p, head, x, c, m, ref):
    y, cache = run(p, head, x, c, m)
    loss, dy = batch_loss(y, ref)
    return loss, backward(cache, dy)


def check(p, head, x, c, m, ref, rng, coords_per_tensor=12):
    """Max over tensors of max|analytic - numeric| / max|analytic| on sampled coordinates."""
    _, g = loss_and_grad(p, head, x, c, m, ref)
    worst = 0.0
    flat = p.flat()
    offset = 0
    for name, shape in LAYOUT:
        n = int(np.prod(shape))
        ga = g[name].ravel()
        if head == "kernel" and name.startswith("dir") or head == "direct" and name.startswith("ker"):
            assert np.all(ga == 0)
            offset += n
            continue
        pick = set(rng.choice(n, size=min(n, coords_per_tensor), replace=False).tolist())
        pick.add(int(np.argmax(np.abs(ga))))
        diffs = []
        for j in sorted(pick):
            hi, lo = flat.copy(), flat.copy()
            hi[offset + j] += STEP
            lo[offset + j] -= STEP
            fh, _ = loss_and_grad(NetParams.from_flat(hi), head, x, c, m, ref)
            fl, _ = loss_and_grad(NetParams.from_flat(lo), head, x, c, m, ref)
            diffs.append(abs(ga[j] - (fh - fl) / (2 * STEP)))
        scale = np.max(np.abs(ga))
        if scale > 0:
            worst = max(worst, max(diffs) / scale)
        offset += n
    return worst


def draws(seed, head, count):
    """``count`` random problems that are differentiable at FD resolution."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        prob = random_problem(rng)
        if smooth_enough(*prob[:1], head, *prob[1:4]):
            out.append(prob)
    return out, rng


assert HIDDEN == 64
