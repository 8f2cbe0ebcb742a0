"""Per-target recurrent motion model: prediction, update and existence.

One step of the model for a single track, given its updated state ``x``,
existence ``e``, hidden vector ``h`` and the state ``x_prev`` one frame
earlier::

    d     = tanh(g (x - x_prev))                   squashed velocity
    h'    = tanh(Wc [x; d; h; 1])                  core recurrence
    x*    = x + Wp [h'; 1]                         prediction
    zbar  = sum_j a_j z_j + a_miss x*              assignment-weighted input
    x_new = zbar + Wo [tanh(Wu [zbar; x*; h'; 1]); 1]
    e_new = sigmoid(We [h'; e; 1 - a_miss; 1])
    e_diff = |e_new - e|

The same weights serve every track; each track keeps its own memory
``[h; x_prev]``.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .checkpoint import assign_params, load_checkpoint, save_checkpoint
from .errors import InvalidArgument, NumericError
from .scene import CLUTTER, D

BCE_EPS = 1e-7
NORM_TOL = 1e-6
HEAD_SCALE = 1.0
VELOCITY_GAIN = 50.0
REFIT_RIDGE = 1e-8


@dataclass
class LossWeights:
    """Weights of the prediction, update, existence and smoothness terms."""

    prediction: float = 1.0
    update: float = 1.0
    existence: float = 1.0
    smoothness: float = 0.1

    def __post_init__(self):
        if min(self.prediction, self.update, self.existence, self.smoothness) < 0:
            raise InvalidArgument("loss weights must be non-negative")


class MotionNet:
    """Shared-weight recurrent model for one target at a time.

    A track's memory is the vector ``[h; x_prev]``: the core's hidden units
    plus the state the track had one frame earlier. Besides the current state
    the core reads ``tanh(velocity_gain * (x - x_prev))``, the squashed
    frame-to-frame change, which keeps the velocity signal well scaled.
    """

    def __init__(self, hidden_size=300, update_hidden=64, rng=None, scale=nn.INIT_SCALE,
                 head_scale=HEAD_SCALE, velocity_gain=VELOCITY_GAIN):
        rng = nn._as_rng(rng)
        self.head_scale = float(head_scale)
        self.velocity_gain = float(velocity_gain)
        self.hidden_size = hidden_size
        self.update_hidden = update_hidden
        self.core = nn.RnnCell(2 * D, hidden_size, rng, scale)
        self.pred = nn.Linear(hidden_size, D, rng, scale)
        self.upd_hidden = nn.Linear(2 * D + hidden_size, update_hidden, rng, scale)
        self.upd_out = nn.Linear(update_hidden, D, rng, scale)
        self.exist = nn.Linear(hidden_size + 2, 1, rng, scale)
        # residual heads start at zero: x* = x and x_new = zbar before training
        self.pred.W.value[...] = 0.0
        self.upd_out.W.value[...] = 0.0

    @classmethod
    def zeros(cls, hidden_size=8, update_hidden=4):
        net = cls(hidden_size, update_hidden)
        for p in net.params().values():
            p.value[...] = 0.0
        return net

    def params(self):
        return {
            "core.W": self.core.W,
            "pred.W": self.pred.W,
            "upd_hidden.W": self.upd_hidden.W,
            "upd_out.W": self.upd_out.W,
            "exist.W": self.exist.W,
        }

    def zero_grad(self):
        for p in self.params().values():
            p.zero_grad()

    @property
    def memory_size(self):
        return self.hidden_size + D

    @property
    def sizes(self):
        return {"hidden_size": self.hidden_size, "update_hidden": self.update_hidden,
                "head_scale": self.head_scale, "velocity_gain": self.velocity_gain}

    def save(self, path, iteration=0):
        save_checkpoint(path, "motion", self.sizes, self.params(), iteration)

    @classmethod
    def load(cls, path):
        kind, sizes, arrays, iteration = load_checkpoint(path)
        if kind != "motion":
            raise InvalidArgument(f"{path} holds a {kind!r} model, not a motion model")
        net = cls(**sizes)
        assign_params(net.params(), arrays)
        net.iteration = iteration
        return net

    # batched building blocks, all arrays carry a leading batch dimension

    def initial_memory(self, x):
        """Memory of tracks spawned at states ``x`` (B, D): zero hidden units
        and no motion so far."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, D)
        return np.concatenate([np.zeros((len(x), self.hidden_size)), x], axis=1)

    def _predict(self, x, mem):
        H = self.hidden_size
        d = np.tanh(self.velocity_gain * (x - mem[:, H:]))
        (h1,), cache = self.core.step(np.concatenate([x, d], axis=1), (mem[:, :H],))
        return x + self.head_scale * self.pred.forward(h1), h1, (cache, d)

    def _update(self, xs, zsum, miss, h1):
        zbar = zsum + miss[:, None] * xs
        uin = np.concatenate([zbar, xs, h1], axis=1)
        u = np.tanh(self.upd_hidden.forward(uin))
        return zbar + self.head_scale * self.upd_out.forward(u), (zbar, uin, u)

    def _existence(self, h1, e_prev, support):
        ein = np.concatenate([h1, e_prev[:, None], support[:, None]], axis=1)
        return nn.sigmoid(self.exist.forward(ein)[:, 0]), ein

    def step(self, x, mem, e, zsum, miss):
        """Advance ``B`` tracks by one frame.

        Returns ``(x_star, x_new, e_new, mem_new)``.
        """
        xs, h1, _ = self._predict(x, mem)
        x_new, _ = self._update(xs, zsum, miss, h1)
        e_new, _ = self._existence(h1, e, 1.0 - miss)
        return xs, x_new, e_new, np.concatenate([h1, x], axis=1)

    # training

    def forward(self, batch):
        """Unroll over a `MotionBatch`; returns outputs and the tape."""
        T, B = batch.miss.shape
        x, e = batch.x0, batch.e0
        mem = self.initial_memory(x)
        xs_seq, x_seq, e_seq, ed_seq, tape = [], [], [], [], []
        for t in range(T):
            xs, h1, core_cache = self._predict(x, mem)
            x_new, upd_cache = self._update(xs, batch.zsum[t], batch.miss[t], h1)
            e_new, ein = self._existence(h1, e, 1.0 - batch.miss[t])
            if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(h1))):
                raise NumericError(f"non-finite state at step {t}", step=t)
            tape.append((x, e, h1, core_cache, upd_cache, ein))
            xs_seq.append(xs)
            x_seq.append(x_new)
            e_seq.append(e_new)
            ed_seq.append(np.abs(e_new - e))
            x, e, mem = x_new, e_new, np.concatenate([h1, x], axis=1)
        return (np.stack(xs_seq), np.stack(x_seq), np.stack(e_seq), np.stack(ed_seq)), tape

    def loss_and_grads(self, batch, weights=None, detach_existence=False):
        """Zero then fill all parameter gradients; return ``(loss, terms)``.

        With ``detach_existence`` the existence head still learns but its
        gradient is not passed into the shared recurrent core, so the core is
        shaped by the location terms alone.
        """
        weights = LossWeights() if weights is None else weights
        self.zero_grad()
        (xs_seq, x_seq, e_seq, ed_seq), tape = self.forward(batch)
        loss, terms = motion_loss(xs_seq, x_seq, e_seq, ed_seq, batch.gt, batch.gt_e, weights,
                                  mask=batch.mask, return_terms=True)
        g_xs, g_x, g_e, g_eprev = _motion_loss_grads(
            xs_seq, x_seq, e_seq, tape, batch, weights)
        T, B = batch.miss.shape
        H = self.hidden_size
        dx_next = np.zeros((B, D))
        dh_next = np.zeros((B, H))
        de_next = np.zeros(B)
        # gradient owed to this step's input state by the next step's
        # velocity feature, where it enters as x_prev
        carry = np.zeros((B, D))
        for t in range(T - 1, -1, -1):
            _, _, h1, (core_cache, d), (zbar, uin, u), ein = tape[t]
            dx = g_x[t] + dx_next
            de = g_e[t] + de_next
            dxs = g_xs[t].copy()
            dzbar = dx.copy()
            du = self.upd_out.backward(u, self.head_scale * dx)
            duin = self.upd_hidden.backward(uin, du * (1.0 - u * u))
            dzbar += duin[:, :D]
            dxs += duin[:, D:2 * D]
            dh1 = duin[:, 2 * D:] + dh_next
            dxs += batch.miss[t][:, None] * dzbar
            e = e_seq[t]
            dein = self.exist.backward(ein, (de * e * (1.0 - e))[:, None])
            if not detach_existence:
                dh1 += dein[:, :H]
            de_prev = dein[:, H] + g_eprev[t]
            dh1 += self.pred.backward(h1, self.head_scale * dxs)
            d_in, (dh_prev,) = self.core.step_backward((dh1,), core_cache)
            d_delta = d_in[:, D:] * self.velocity_gain * (1.0 - d * d)
            dx_next = dxs + d_in[:, :D] + d_delta - carry
            carry = d_delta
            dh_next = dh_prev
            de_next = de_prev
        return loss, terms

    def refit_prediction_head(self, batch, ridge=REFIT_RIDGE):
        """Set the prediction head to the ridge least-squares fit of the
        prediction term, holding the recurrent core fixed.

        The velocity signal lives in low-variance directions of ``h``, which
        leaves the head badly conditioned for first-order optimisers; a
        closed-form solve fixes that. Returns the number of frames used.
        """
        _, tape = self.forward(batch)
        valid = (batch.mask * batch.gt_e) > 0
        feats, targets = [], []
        for t, (x_prev, _, h1, *_) in enumerate(tape):
            sel = valid[t]
            feats.append(h1[sel])
            targets.append((batch.gt[t][sel] - x_prev[sel]) / self.head_scale)
        F = np.concatenate(feats)
        n = len(F)
        if n == 0:
            return 0
        F = np.concatenate([F, np.ones((n, 1))], axis=1)
        Y = np.concatenate(targets)
        A = F.T @ F + ridge * n * np.eye(F.shape[1])
        self.pred.W.value[...] = np.linalg.solve(A, F.T @ Y).T
        return n


@dataclass
class MotionBatch:
    """Training episodes, time-major.

    ``x0``/``e0`` are the spawn state and initial existence (B, ...); per step
    ``zsum`` is the assignment-weighted sum of measurements (excluding the
    miss column), ``miss`` the miss probability, ``gt``/``gt_e`` the target
    state and existence, and ``mask`` marks valid steps.
    """

    x0: np.ndarray
    e0: np.ndarray
    zsum: np.ndarray
    miss: np.ndarray
    gt: np.ndarray
    gt_e: np.ndarray
    mask: np.ndarray

    @property
    def shape(self):
        return self.miss.shape

    @staticmethod
    def stack(episodes):
        def col(name, axis):
            return np.stack([getattr(ep, name) for ep in episodes], axis=axis)

        return MotionBatch(col("x0", 0), col("e0", 0), col("zsum", 1), col("miss", 1),
                           col("gt", 1), col("gt_e", 1), col("mask", 1))


def bce_term(e, e_gt):
    """Binary cross entropy ``-(g ln e + (1-g) ln(1-e))`` with ``e`` clamped
    to ``[1e-7, 1 - 1e-7]``."""
    e = np.clip(e, BCE_EPS, 1.0 - BCE_EPS)
    return -(e_gt * np.log(e) + (1.0 - e_gt) * np.log(1.0 - e))


def motion_loss(x_star_seq, x_seq, e_seq, e_diff_seq, gt_states, gt_existence, w=None,
                mask=None, return_terms=False):
    """Four-term tracking loss averaged over valid frames.

    Sequences are time-major, either ``(T, D)`` / ``(T,)`` for one track or
    ``(T, B, D)`` / ``(T, B)`` for a batch. The location terms only count
    frames where the target exists.
    """
    w = LossWeights() if w is None else w
    xs, x, gt = (np.asarray(a, dtype=np.float64) for a in (x_star_seq, x_seq, gt_states))
    e, ed, ge = (np.asarray(a, dtype=np.float64) for a in (e_seq, e_diff_seq, gt_existence))
    if not all(np.all(np.isfinite(a)) for a in (xs, x, gt, e, ed, ge)):
        raise NumericError("non-finite input to motion_loss")
    if not (xs.shape == x.shape == gt.shape and e.shape == ed.shape == ge.shape == xs.shape[:-1]):
        raise InvalidArgument("motion_loss sequences must share their leading shape")
    m = np.ones(e.shape) if mask is None else np.asarray(mask, dtype=np.float64)
    denom = max(m.sum(), 1.0)
    loc = m * ge
    pred = np.sum(loc * np.sum((xs - gt) ** 2, axis=-1)) / (D * denom)
    upd = np.sum(loc * np.sum((x - gt) ** 2, axis=-1)) / (D * denom)
    ex = np.sum(m * bce_term(e, ge)) / denom
    smooth = np.sum(m * ed) / denom
    terms = {"prediction": float(pred), "update": float(upd), "existence": float(ex),
             "smoothness": float(smooth)}
    total = (w.prediction * pred + w.update * upd + w.existence * ex + w.smoothness * smooth)
    if return_terms:
        return float(total), terms
    return float(total)


def _motion_loss_grads(xs_seq, x_seq, e_seq, tape, batch, w):
    m = batch.mask
    denom = max(m.sum(), 1.0)
    loc = (m * batch.gt_e)[..., None]
    g_xs = w.prediction * 2.0 * loc * (xs_seq - batch.gt) / (D * denom)
    g_x = w.update * 2.0 * loc * (x_seq - batch.gt) / (D * denom)
    ge = batch.gt_e
    inside = (e_seq > BCE_EPS) & (e_seq < 1.0 - BCE_EPS)
    ec = np.clip(e_seq, BCE_EPS, 1.0 - BCE_EPS)
    d_bce = np.where(inside, -ge / ec + (1.0 - ge) / (1.0 - ec), 0.0)
    e_prev = np.stack([tp[1] for tp in tape])
    sgn = np.sign(e_seq - e_prev)
    g_e = m * (w.existence * d_bce + w.smoothness * sgn) / denom
    g_eprev = -m * w.smoothness * sgn / denom
    return g_xs, g_x, g_e, g_eprev


# single-track operations


def predict(net, x_t, h_t):
    """Prediction for the next frame from state ``x_t`` and memory ``h_t``.

    Returns ``(x_star, h_next)`` where ``h_next`` is the track's memory after
    this frame (see `MotionNet.initial_memory`).
    """
    x = nn._check_vec("x_t", x_t, D)
    h = nn._check_vec("h_t", h_t, net.memory_size)
    single = x.ndim == 1
    x2, h2 = np.atleast_2d(x), np.atleast_2d(h)
    xs, h1, _ = net._predict(x2, h2)
    mem = np.concatenate([h1, x2], axis=1)
    return (xs[0], mem[0]) if single else (xs, mem)


def _hidden_part(net, name, h):
    """Hidden units from either a memory vector or bare hidden units."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape == (net.memory_size,):
        return h[:net.hidden_size]
    return nn._check_vec(name, h, net.hidden_size)


def weighted_measurement(x_star, frame, a_row):
    """Convex combination of the frame's detections and ``x_star``.

    ``a_row`` has ``M + 1`` entries, the last being the miss probability.
    Masked slots are zeroed and the row renormalised. Returns
    ``(zbar, zsum, miss)``.
    """
    a = np.asarray(a_row, dtype=np.float64)
    if a.shape != (frame.max_detections + 1,):
        raise InvalidArgument(f"a_row must have {frame.max_detections + 1} entries")
    if np.any(a < 0) or abs(a.sum() - 1.0) > NORM_TOL:
        raise InvalidArgument("a_row must be a probability vector")
    a = a.copy()
    a[:-1][~frame.mask] = 0.0
    a /= a.sum() if a.sum() > 0 else 1.0
    if a.sum() == 0:
        a[-1] = 1.0
    zsum = a[:-1] @ frame.boxes
    zbar = zsum + a[-1] * np.asarray(x_star, dtype=np.float64)
    return zbar, zsum, a[-1]


def update(net, x_star, z_next, a_row, h):
    """Updated state from the prediction, the next frame's detections and
    this track's assignment row."""
    xs = nn._check_vec("x_star", x_star, D)
    h = _hidden_part(net, "h", h)
    _, zsum, miss = weighted_measurement(xs, z_next, a_row)
    x_new, _ = net._update(xs[None], zsum[None], np.array([miss]), h[None])
    return x_new[0]


def existence(net, h_next, e_t, support=1.0):
    """Existence probability for the next frame and its change ``|e - e_t|``.

    ``support`` is the probability that the track received a measurement this
    frame (one minus its miss probability).
    """
    if not 0.0 <= e_t <= 1.0:
        raise InvalidArgument("e_t must lie in [0, 1]")
    h = _hidden_part(net, "h_next", h_next)
    e_new, _ = net._existence(h[None], np.array([float(e_t)]), np.array([float(support)]))
    e_new = float(e_new[0])
    return e_new, abs(e_new - e_t)


# training episodes


@dataclass
class Episode:
    x0: np.ndarray
    e0: float
    zsum: np.ndarray
    miss: np.ndarray
    gt: np.ndarray
    gt_e: np.ndarray
    mask: np.ndarray


def motion_episodes(scene, rng, init_existence=0.5, clutter_per_scene=None, n_steps=None):
    """Cut a scene into per-track training episodes as the tracker sees them.

    Each ground-truth target yields one episode spawned at its first detection
    and fed its own detections (or a miss) afterwards; its existence label is
    the box function over its lifetime. Clutter detections yield episodes
    with existence label 0 and only misses. All episodes are padded to
    ``n_steps`` (default ``T - 1``) with ``mask = 0``.
    """
    T = scene.n_frames
    n_steps = T - 1 if n_steps is None else n_steps
    episodes = []

    def blank():
        return (np.zeros((n_steps, D)), np.ones(n_steps), np.zeros((n_steps, D)),
                np.zeros(n_steps), np.zeros(n_steps))

    for tr in scene.gt_tracks:
        spawn = None
        for t in range(T):
            hit = np.flatnonzero(scene.frames[t].source == tr.id)
            if len(hit):
                spawn, x0 = t, scene.frames[t].boxes[hit[0]]
                break
        if spawn is None or spawn >= T - 1:
            continue
        zsum, miss, gt, gt_e, mask = blank()
        for k, t in enumerate(range(spawn + 1, min(T, spawn + 1 + n_steps))):
            fr = scene.frames[t]
            hit = np.flatnonzero(fr.source == tr.id)
            if len(hit):
                zsum[k] = fr.boxes[hit[0]]
                miss[k] = 0.0
            if tr.alive(t):
                gt[k] = tr.state_at(t)
                gt_e[k] = 1.0
            mask[k] = 1.0
        episodes.append(Episode(x0.copy(), init_existence, zsum, miss, gt, gt_e, mask))

    spawns = [(t, j) for t in range(T - 1) for j in np.flatnonzero(scene.frames[t].source == CLUTTER)]
    if clutter_per_scene is not None and len(spawns) > clutter_per_scene:
        pick = rng.choice(len(spawns), size=clutter_per_scene, replace=False)
        spawns = [spawns[i] for i in sorted(pick)]
    for t, j in spawns:
        zsum, miss, gt, gt_e, mask = blank()
        mask[: min(n_steps, T - 1 - t)] = 1.0
        episodes.append(Episode(scene.frames[t].boxes[j].copy(), init_existence,
                                zsum, miss, gt, gt_e, mask))
    return episodes


def one_step_errors(net, tracks):
    """Feed clean, fully observed tracks through the model.

    ``tracks`` is an array ``(B, L, D)``. Returns per-step prediction errors
    ``x*_t - x_t`` for steps ``1..L-1`` as ``(L - 1, B, D)``.
    """
    tracks = np.asarray(tracks, dtype=np.float64)
    B, L, _ = tracks.shape
    x, e = tracks[:, 0], np.full(B, 0.5)
    mem = net.initial_memory(x)
    errs = []
    for t in range(1, L):
        xs, x, e, mem = net.step(x, mem, e, tracks[:, t], np.zeros(B))
        errs.append(xs - tracks[:, t])
    return np.stack(errs)
