"""Online multi-target tracker built from the motion and association nets.

Every frame, each live track predicts its next state, predictions and
detections are associated (exact assignment or the learned association
net), states and existence probabilities are updated, tracks whose existence
drops below the threshold are removed and unclaimed detections start new
candidate tracks. Output for a frame is final once the frame is processed.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .assignment import MISS, solve_lap
from .association import assoc_forward, build_cost_matrix, infer_hard_assignment
from .errors import InvalidArgument
from .scene import D, EMPTY, Tracks


@dataclass(frozen=True)
class TrackerConfig:
    """Track management settings.

    ``gate`` bounds the distance of any accepted pairing and doubles as the
    per-track price of a miss in exact assignment. A candidate that is still
    below the threshold after ``candidate_frames`` updates is dropped.
    """

    existence_threshold: float = 0.6
    assoc_mode: str = "hungarian"
    max_targets: int = 50
    init_existence: float = 0.5
    gate: float = 0.15
    hard_assignment: str = "argmax"
    candidate_frames: int = 1

    def __post_init__(self):
        if not 0.0 < self.existence_threshold < 1.0:
            raise InvalidArgument("existence_threshold must lie in (0, 1)")
        if not 0.0 < self.init_existence < 1.0:
            raise InvalidArgument("init_existence must lie in (0, 1)")
        if self.assoc_mode not in ("hungarian", "lstm"):
            raise InvalidArgument("assoc_mode must be 'hungarian' or 'lstm'")
        if self.hard_assignment not in ("argmax", "lap"):
            raise InvalidArgument("hard_assignment must be 'argmax' or 'lap'")
        if self.max_targets < 1 or self.gate <= 0 or self.candidate_frames < 1:
            raise InvalidArgument("max_targets, gate and candidate_frames must be positive")

    @classmethod
    def from_run_config(cls, cfg, **changes):
        values = dict(existence_threshold=cfg.existence_threshold, assoc_mode=cfg.assoc_mode,
                      max_targets=cfg.max_live_tracks, init_existence=cfg.init_existence,
                      gate=cfg.gate, hard_assignment=cfg.hard_assignment)
        values.update(changes)
        return cls(**values)


@dataclass
class Nets:
    motion: object
    assoc: object = None


@dataclass
class LiveTrack:
    id: int
    state: np.ndarray
    hidden: np.ndarray
    existence: float
    history: list = field(default_factory=list)
    updates: int = 0
    confirmed: bool = False


@dataclass
class TrackerState:
    """Everything carried from one frame to the next."""

    tracks: list = field(default_factory=list)
    next_id: int = 1
    frame: int = 0


@dataclass
class FrameOutput:
    """Emitted boxes for one frame plus the per-track existence log.

    ``log`` rows are ``(frame, id, existence, source)`` for every track alive
    after the update, where ``source`` is the provenance tag of the detection
    the track was matched to (``EMPTY`` on a miss or when unknown).
    """

    frame: int
    ids: np.ndarray
    boxes: np.ndarray
    scores: np.ndarray
    log: list


def _hungarian_rows(c, gate):
    n, m = c.shape
    cost = np.where(c > gate, np.inf, c)
    cols = solve_lap(cost, gate).cols
    a = np.zeros((n, m + 1))
    a[np.arange(n), [m if j == MISS else j for j in cols]] = 1.0
    return a


def _lstm_rows(net, c, gate):
    n, m = c.shape
    rows = []
    # the net has a fixed row capacity; longer track lists go in chunks
    for lo in range(0, n, net.max_targets):
        rows.append(assoc_forward(net, c[lo:lo + net.max_targets]).probs)
    a = np.concatenate(rows, axis=0) if rows else np.zeros((0, m + 1))
    a[:, :m][c > gate] = 0.0
    a[:, m] = np.where(a.sum(axis=1) > 0, a[:, m], 1.0)
    return a / a.sum(axis=1, keepdims=True)


def associate(c, nets, cfg):
    """Soft rows ``(n, m + 1)`` and hard columns for cost matrix ``c``."""
    n, m = c.shape
    if n == 0:
        return np.zeros((0, m + 1)), ()
    if cfg.assoc_mode == "hungarian" or m == 0:
        a = _hungarian_rows(c, cfg.gate)
        cols = tuple(MISS if j == m else int(j) for j in np.argmax(a, axis=1))
        return a, cols
    if nets.assoc is None:
        raise InvalidArgument("lstm association needs an association net")
    a = _lstm_rows(nets.assoc, c, cfg.gate)
    return a, infer_hard_assignment(a, cfg.hard_assignment).cols


def step_frame(state, frame, nets, cfg):
    """Advance the tracker by one `MeasurementFrame`.

    Returns the new `TrackerState` and the frame's `FrameOutput`. The input
    state is not modified.
    """
    net = nets.motion
    t = state.frame + 1
    slots = np.flatnonzero(frame.mask)
    dets = frame.boxes[slots]
    sources = frame.source[slots]
    tracks = state.tracks
    n, m = len(tracks), len(dets)
    used = set()
    survivors, log = [], []
    if n:
        X = np.array([tr.state for tr in tracks])
        Hd = np.array([tr.hidden for tr in tracks])
        E = np.array([tr.existence for tr in tracks])
        xs, h1, _ = net._predict(X, Hd)
        c = build_cost_matrix(xs, frame)[:, slots]
        a, cols = associate(c, nets, cfg)
        zsum = a[:, :m] @ dets if m else np.zeros((n, D))
        miss = a[:, m]
        x_new, _ = net._update(xs, zsum, miss, h1)
        e_new, _ = net._existence(h1, E, 1.0 - miss)
        for k, tr in enumerate(tracks):
            j = cols[k]
            if j != MISS:
                used.add(j)
            e = float(e_new[k])
            updates = tr.updates + 1
            alive = e >= cfg.existence_threshold
            if not alive and (tr.confirmed or updates >= cfg.candidate_frames):
                continue
            mem = np.concatenate([h1[k], X[k]])
            new = LiveTrack(tr.id, x_new[k], mem, e, tr.history + [(t, x_new[k])], updates,
                            tr.confirmed or alive)
            survivors.append(new)
            log.append((t, new.id, e, int(sources[j]) if j != MISS else EMPTY))
    next_id = state.next_id
    for j in range(m):
        if j in used:
            continue
        new = LiveTrack(next_id, dets[j].copy(), net.initial_memory(dets[j])[0], cfg.init_existence,
                        [(t, dets[j].copy())])
        survivors.append(new)
        log.append((t, new.id, new.existence, int(sources[j])))
        next_id += 1
    if len(survivors) > cfg.max_targets:
        order = sorted(range(len(survivors)), key=lambda i: (-survivors[i].existence, i))
        keep = set(order[:cfg.max_targets])
        kept_ids = {survivors[i].id for i in keep}
        survivors = [s for i, s in enumerate(survivors) if i in keep]
        log = [row for row in log if row[1] in kept_ids]
    emit = [s for s in survivors if s.existence >= cfg.existence_threshold]
    out = FrameOutput(
        t,
        np.array([s.id for s in emit], dtype=np.int64),
        np.array([s.state for s in emit]).reshape(-1, D),
        np.array([s.existence for s in emit]),
        log,
    )
    return TrackerState(survivors, next_id, t), out


@dataclass
class RunResult:
    tracks: Tracks
    frame_times: np.ndarray
    existence_log: list

    @property
    def fps(self):
        total = float(np.sum(self.frame_times))
        return len(self.frame_times) / total if total > 0 else float("inf")


def outputs_to_tracks(outputs):
    rows = []
    for out in outputs:
        for i, box, s in zip(out.ids, out.boxes, out.scores):
            rows.append((out.frame, int(i), *box, s))
    return Tracks.from_rows(rows)


def run_sequence(frames, nets, cfg=None):
    """Run the tracker over a list of frames; returns a `RunResult`."""
    cfg = TrackerConfig() if cfg is None else cfg
    state = TrackerState()
    outputs, times = [], []
    for frame in frames:
        t0 = time.perf_counter()
        state, out = step_frame(state, frame, nets, cfg)
        times.append(time.perf_counter() - t0)
        outputs.append(out)
    log = [row for out in outputs for row in out.log]
    return RunResult(outputs_to_tracks(outputs), np.array(times), log)
