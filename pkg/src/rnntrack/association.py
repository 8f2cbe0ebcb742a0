"""Learned data association.

A two-layer LSTM reads the whole target-to-measurement distance matrix at
every step and emits one row of assignment probabilities per step: step ``i``
answers "which of the M measurements, or none, belongs to target ``i``".
The step index is appended to the input as a one-hot vector so the network
knows which row it is producing.
"""

import math

import numpy as np

from . import nn
from .assignment import MISS, Assignment, solve_lap
from .checkpoint import assign_params, load_checkpoint, save_checkpoint
from .errors import InvalidArgument
from .scene import D, GroundTruthTrack

SENTINEL_COST = 10.0
ROW_TOL = 1e-9
LOG_EPS = 1e-12
COST_SCALE = 1.0 / math.sqrt(D)


class AssignmentMatrix:
    """``N x (M + 1)`` row-stochastic matrix; the last column is "missed"."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[1] < 1:
            raise InvalidArgument("assignment matrix must be N x (M + 1)")
        if np.any(probs < 0) or np.any(probs > 1):
            raise InvalidArgument("assignment probabilities must lie in [0, 1]")
        if probs.size and np.max(np.abs(probs.sum(axis=1) - 1.0)) > ROW_TOL:
            raise InvalidArgument("every assignment row must sum to 1")
        self.probs = probs

    @property
    def shape(self):
        return self.probs.shape

    @property
    def miss(self):
        return self.probs[:, -1]

    def __getitem__(self, idx):
        return self.probs[idx]

    def __len__(self):
        return len(self.probs)


def build_cost_matrix(predicted, frame):
    """Euclidean distance from each predicted state to each detection slot;
    empty slots get ``SENTINEL_COST``."""
    pred = np.asarray(predicted, dtype=np.float64).reshape(-1, D)
    diff = pred[:, None, :] - frame.boxes[None, :, :]
    c = np.sqrt(np.sum(diff * diff, axis=-1))
    c[:, ~frame.mask] = SENTINEL_COST
    return c


class AssocNet:
    """Embedding -> LSTM stack -> (M + 1)-way softmax, for up to
    ``max_targets`` rows and ``max_detections`` columns."""

    def __init__(self, max_targets, max_detections, hidden_size=500, layers=2, embed_size=None,
                 rng=None, scale=nn.INIT_SCALE):
        rng = nn._as_rng(rng)
        self.max_targets = max_targets
        self.max_detections = max_detections
        self.hidden_size = hidden_size
        self.layers = layers
        self.embed_size = hidden_size if embed_size is None else embed_size
        n_in = max_targets * max_detections + max_targets
        embed = nn.Linear(n_in, self.embed_size, rng, scale)
        cells, k = [], self.embed_size
        for _ in range(layers):
            cells.append(nn.LstmCell(k, hidden_size, rng, scale))
            k = hidden_size
        head = nn.Linear(hidden_size, max_detections + 1, rng, scale)
        self.model = nn.Recurrent(cells, head, embed)

    @property
    def input_size(self):
        return self.max_targets * (self.max_detections + 1)

    @property
    def sizes(self):
        return {"max_targets": self.max_targets, "max_detections": self.max_detections,
                "hidden_size": self.hidden_size, "layers": self.layers,
                "embed_size": self.embed_size}

    def params(self):
        return self.model.params()

    def zero_grad(self):
        self.model.zero_grad()

    def save(self, path, iteration=0):
        save_checkpoint(path, "assoc", self.sizes, self.params(), iteration)

    @classmethod
    def load(cls, path):
        kind, sizes, arrays, iteration = load_checkpoint(path)
        if kind != "assoc":
            raise InvalidArgument(f"{path} holds a {kind!r} model, not an association model")
        net = cls(**sizes)
        assign_params(net.params(), arrays)
        net.iteration = iteration
        return net

    def pad(self, c):
        """Pad an ``n x m`` cost matrix to the network's fixed size."""
        c = np.asarray(c, dtype=np.float64)
        n, m = c.shape
        if n > self.max_targets or m > self.max_detections:
            raise InvalidArgument(
                f"cost matrix {n}x{m} exceeds network capacity "
                f"{self.max_targets}x{self.max_detections}")
        out = np.full((self.max_targets, self.max_detections), SENTINEL_COST)
        out[:n, :m] = c
        return out

    def sequence_inputs(self, padded):
        """Time-major inputs ``(N, B, N*M + N)`` from padded costs ``(B, N, M)``."""
        padded = np.asarray(padded, dtype=np.float64)
        B, N = padded.shape[0], self.max_targets
        flat = np.minimum(padded, SENTINEL_COST).reshape(B, -1) * COST_SCALE
        x = np.zeros((N, B, flat.shape[1] + N))
        x[:, :, :flat.shape[1]] = flat[None]
        x[np.arange(N), :, flat.shape[1] + np.arange(N)] = 1.0
        return x

    def logits(self, c, n_rows=None):
        """Raw scores ``(n_rows, M + 1)`` for one (unpadded) cost matrix."""
        c = np.asarray(c, dtype=np.float64)
        n_rows = c.shape[0] if n_rows is None else n_rows
        x = self.sequence_inputs(self.pad(c)[None])
        states = self.model.initial_state(1)
        out = []
        for i in range(n_rows):
            y, states = self.model.step(x[i], states)
            out.append(y[0])
        return np.array(out).reshape(n_rows, self.max_detections + 1)


def assoc_forward(net, c, col_mask=None):
    """Assignment probabilities for cost matrix ``c`` (``n x m``).

    The result has ``m + 1`` columns. Columns the net was not given (padding
    beyond ``m``) or that are masked out by ``col_mask`` get probability 0 and
    the rows are renormalised.
    """
    c = np.asarray(c, dtype=np.float64)
    n, m = c.shape
    if n == 0:
        return AssignmentMatrix(np.zeros((0, m + 1)))
    p = nn.softmax(net.logits(c))
    keep = np.zeros(net.max_detections + 1, dtype=bool)
    keep[:m] = True if col_mask is None else np.asarray(col_mask, dtype=bool)
    keep[-1] = True
    p = np.where(keep, p, 0.0)
    p /= p.sum(axis=1, keepdims=True)
    return AssignmentMatrix(np.concatenate([p[:, :m], p[:, -1:]], axis=1))


def da_loss(a_row, correct):
    """Negative log-likelihood of the correct column (clamped at 1e-12)."""
    a = np.asarray(a_row, dtype=np.float64)
    if not 0 <= correct < len(a):
        raise InvalidArgument(f"correct index {correct} out of range")
    return float(-np.log(max(a[correct], LOG_EPS)))


def make_training_labels(gt_tracks, frame):
    """Slot index of each target's own detection in ``frame``, or ``M`` (the
    miss column) when the target was not detected. ``gt_tracks`` holds track
    ids or `GroundTruthTrack` objects."""
    M = frame.max_detections
    labels = []
    for tr in gt_tracks:
        tid = tr.id if isinstance(tr, GroundTruthTrack) else int(tr)
        hit = np.flatnonzero(frame.mask & (frame.source == tid))
        labels.append(int(hit[0]) if len(hit) else M)
    return np.array(labels, dtype=np.int64)


def hungarian_labels(c, miss_cost):
    """Oracle labels from the exact solver; misses map to column ``m``."""
    m = np.asarray(c).shape[1]
    cols = solve_lap(c, miss_cost).cols
    return np.array([m if j == MISS else j for j in cols], dtype=np.int64)


def infer_hard_assignment(a, mode="argmax"):
    """Turn soft assignment rows into a hard `Assignment`.

    ``argmax`` takes each row's most likely column independently and may map
    two rows to one measurement; ``lap`` minimises the total ``-ln A`` under
    the one-to-one constraint, the miss column acting as each row's opt-out
    price.
    """
    probs = a.probs if isinstance(a, AssignmentMatrix) else np.asarray(a, dtype=np.float64)
    n, m1 = probs.shape
    m = m1 - 1
    nll = -np.log(np.maximum(probs, LOG_EPS))
    if mode == "argmax":
        best = np.argmax(probs, axis=1) if n else np.zeros(0, dtype=np.int64)
        cols = tuple(MISS if j == m else int(j) for j in best)
        total = math.fsum(nll[r, m if j == MISS else j] for r, j in enumerate(cols))
        return Assignment(cols, total)
    if mode == "lap":
        return solve_lap(nll[:, :m], nll[:, m])
    raise InvalidArgument(f"unknown hard-assignment mode {mode!r}")


def assoc_instances(scene, rng, max_targets, pred_noise=0.01, miss_cost=0.15, labels="hungarian"):
    """Training/evaluation instances from every frame of a scene.

    Targets alive in a frame (shuffled, at most ``max_targets``) get a
    predicted state equal to the truth plus Gaussian noise, standing in for
    the motion model's prediction. Yields ``(c, labels)`` pairs with ``c`` of
    shape ``(n, M)`` and labels in ``0..M`` (``M`` = miss).
    """
    out = []
    for t, fr in enumerate(scene.frames):
        alive = [tr for tr in scene.gt_tracks if tr.alive(t)]
        if not alive:
            continue
        order = rng.permutation(len(alive))[:max_targets]
        targets = [alive[k] for k in order]
        pred = np.array([tr.state_at(t) for tr in targets])
        pred = pred + rng.normal(0.0, pred_noise, pred.shape)
        c = build_cost_matrix(pred, fr)
        if labels == "hungarian":
            lab = hungarian_labels(c, miss_cost)
        elif labels == "provenance":
            lab = make_training_labels(targets, fr)
        else:
            raise InvalidArgument(f"unknown label source {labels!r}")
        out.append((c, lab))
    return out


def is_well_separated(c, labels, margin):
    """Every target has its own detection and every competing distance in
    its row and its detection's column is at least ``margin``."""
    c = np.asarray(c)
    n, m = c.shape
    if np.any(labels >= m) or len(set(labels.tolist())) != n:
        return False
    for i, j in enumerate(labels):
        others_row = np.delete(c[i], j)
        others_col = np.delete(c[:, j], i)
        if np.any(others_row < margin) or np.any(others_col < margin) or c[i, j] >= margin:
            return False
    return True


def batch_instances(net, instances):
    """Pack ``(c, labels)`` pairs into time-major inputs, labels and mask."""
    B, N = len(instances), net.max_targets
    padded = np.full((B, N, net.max_detections), SENTINEL_COST)
    labels = np.zeros((N, B), dtype=np.int64)
    mask = np.zeros((N, B))
    for b, (c, lab) in enumerate(instances):
        n, m = c.shape
        padded[b] = net.pad(c)
        lab = np.where(lab >= m, net.max_detections, lab)
        labels[:n, b] = lab
        mask[:n, b] = 1.0
    return net.sequence_inputs(padded), labels, mask


def agreement(net, instances):
    """Fraction of rows whose argmax equals the instance label."""
    hits = total = 0
    for c, lab in instances:
        a = assoc_forward(net, c)
        m = c.shape[1]
        pred = np.argmax(a.probs, axis=1)
        hits += int(np.sum(pred == np.where(lab >= m, m, lab)))
        total += len(lab)
    return hits / max(total, 1)
