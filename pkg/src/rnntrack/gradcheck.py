"""Finite-difference checks of the hand-written backward passes.

Each check builds a small random model and problem, computes the analytic
gradient and compares it with central differences over every parameter
entry. The reported error for a parameter matrix is
``|g - n| / max(|g| + |n|, floor)`` in the Frobenius norm; a check returns
the worst value over all parameters.
"""

import numpy as np

from . import nn
from .association import AssocNet
from .motion import LossWeights, MotionBatch, MotionNet, motion_loss

FD_STEP = 1e-6
ERROR_FLOOR = 1e-8
TOLERANCE = 1e-4


def relative_error(analytic, numeric, floor=ERROR_FLOOR):
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))


def numeric_gradient(f, param, step=FD_STEP):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``param``."""
    g = np.zeros_like(param.value)
    flat, gflat = param.value.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        up = f()
        flat[i] = old - step
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * step)
    return g


def _compare(params, loss_fn, grad_fn):
    grad_fn()
    analytic = {k: p.grad.copy() for k, p in params.items()}
    return max(relative_error(analytic[k], numeric_gradient(loss_fn, p))
               for k, p in params.items())


def check_recurrent(rng, kind="rnn", layers=1, loss="mse", T=4, B=2, n_in=3, hidden=5, n_out=3):
    """A stack of RNN or LSTM cells with an affine head under BPTT."""
    cell = nn.RnnCell if kind == "rnn" else nn.LstmCell
    cells, k = [], n_in
    for _ in range(layers):
        cells.append(cell(k, hidden, rng, 0.5))
        k = hidden
    model = nn.Recurrent(cells, nn.Linear(hidden, n_out, rng, 0.5))
    x = rng.normal(size=(T, B, n_in))
    if loss == "mse":
        y = rng.normal(size=(T, B, n_out))
    else:
        y = rng.integers(0, n_out, size=(T, B))
    mask = (rng.random((T, B)) < 0.8).astype(float)
    mask[0] = 1.0

    def value():
        return nn.LOSSES[loss](model.forward(x)[0], y, mask)[0]

    return _compare(model.params(), value, lambda: nn.bptt_gradients(model, x, y, loss, mask))


def random_motion_batch(rng, T=5, B=3, m=None):
    """Random episodes with soft assignments, misses and existence labels."""
    miss = rng.random((T, B))
    miss[rng.random((T, B)) < 0.3] = 1.0
    return MotionBatch(
        x0=rng.normal(0, 0.2, (B, 4)),
        e0=rng.uniform(0.2, 0.8, B),
        zsum=(1.0 - miss)[..., None] * rng.normal(0, 0.2, (T, B, 4)),
        miss=miss,
        gt=rng.normal(0, 0.2, (T, B, 4)),
        gt_e=(rng.random((T, B)) < 0.6).astype(float),
        mask=np.ones((T, B)) if m is None else m,
    )


def check_motion(rng, hidden=5, update_hidden=3, weights=None):
    """All four loss terms through the full motion network."""
    net = MotionNet(hidden, update_hidden, rng, 0.5)
    for p in net.params().values():
        p.value[...] = rng.uniform(-0.5, 0.5, p.value.shape)
    batch = random_motion_batch(rng)
    w = LossWeights(1.0, 1.0, 1.0, 0.1) if weights is None else weights

    def value():
        (xs, x, e, ed), _ = net.forward(batch)
        return motion_loss(xs, x, e, ed, batch.gt, batch.gt_e, w, mask=batch.mask)

    return _compare(net.params(), value, lambda: net.loss_and_grads(batch, w))


def check_association(rng, max_targets=3, max_detections=3, hidden=4, embed=3):
    """Data-association NLL through embedding, two LSTM layers and softmax."""
    net = AssocNet(max_targets, max_detections, hidden, 2, embed, rng, 0.5)
    B = 2
    padded = rng.uniform(0, 1, (B, max_targets, max_detections))
    x = net.sequence_inputs(padded)
    labels = rng.integers(0, max_detections + 1, size=(max_targets, B))
    mask = np.ones((max_targets, B))
    mask[-1, 0] = 0.0
    model = net.model

    def value():
        return nn.nll_loss(model.forward(x)[0], labels, mask)[0]

    return _compare(model.params(), value, lambda: nn.bptt_gradients(model, x, labels, "nll", mask))


CHECKS = {
    "rnn": lambda rng: check_recurrent(rng, "rnn", layers=1),
    "lstm": lambda rng: check_recurrent(rng, "lstm", layers=2, loss="nll", T=3, hidden=4),
    "motion": check_motion,
    "association": check_association,
}


def run_suite(seed=0, instances=50, names=None):
    """Worst relative error per check over ``instances`` random problems."""
    rngs = np.random.SeedSequence(seed).spawn(len(CHECKS))
    out = {}
    for (name, fn), ss in zip(CHECKS.items(), rngs):
        if names is not None and name not in names:
            continue
        rng = np.random.default_rng(ss)
        out[name] = max(fn(rng) for _ in range(instances))
    return out
