"""Synthetic scene generator.

Trajectories are straight lines whose start state and per-frame velocity are
drawn from independent per-dimension normals (a `TrajectoryModel`, which can
be fitted to annotated tracks with `fit_model`). Each live target is detected
with probability ``detection_prob`` and jittered by Gaussian noise; Poisson
clutter is scattered uniformly over the image.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidArgument
from .scene import CLUTTER, D, EMPTY, GroundTruthTrack, MeasurementFrame, SceneSequence

MIN_TRACK_LENGTH = 5
MIN_SIZE = -0.49  # w, h must stay above the zero-pixel size (-0.5)


@dataclass
class TrajectoryModel:
    """Per-dimension mean/variance of the start state and mean velocity."""

    start_mean: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -0.42, -0.25]))
    start_var: np.ndarray = field(default_factory=lambda: np.array([0.15, 0.12, 0.02, 0.05]) ** 2)
    vel_mean: np.ndarray = field(default_factory=lambda: np.zeros(D))
    vel_var: np.ndarray = field(default_factory=lambda: np.array([0.01, 0.004, 0.0005, 0.001]) ** 2)

    def __post_init__(self):
        for name in ("start_mean", "start_var", "vel_mean", "vel_var"):
            v = np.asarray(getattr(self, name), dtype=np.float64).reshape(D)
            setattr(self, name, v)
        if np.any(self.start_var < 0) or np.any(self.vel_var < 0):
            raise InvalidArgument("variances must be non-negative")


@dataclass
class SceneConfig:
    """Scene sampling parameters.

    ``working_range`` bounds every ground-truth coordinate: a track is cut
    (dies) on the frame before it leaves ``[-r, r]``, and start/velocity draws
    that leave it within the first ``MIN_TRACK_LENGTH`` frames are redrawn.
    """

    seq_length: int = 20
    min_targets: int = 1
    max_targets: int = 5
    max_detections: int = 10
    detection_prob: float = 0.9
    clutter_rate: float = 1.0
    detection_noise: float = 0.01
    birth_spread: bool = True
    working_range: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.seq_length < MIN_TRACK_LENGTH + 1:
            raise InvalidArgument(f"seq_length must be at least {MIN_TRACK_LENGTH + 1}")
        if not 1 <= self.min_targets <= self.max_targets:
            raise InvalidArgument("need 1 <= min_targets <= max_targets")
        if self.max_detections < 1:
            raise InvalidArgument("max_detections must be positive")
        if not 0.0 <= self.detection_prob <= 1.0:
            raise InvalidArgument("detection_prob must lie in [0, 1]")
        if self.clutter_rate < 0 or self.detection_noise < 0:
            raise InvalidArgument("clutter_rate and detection_noise must be non-negative")


def _track_arrays(gt_tracks):
    out = []
    for tr in gt_tracks:
        states = getattr(tr, "states", tr)
        states = np.asarray(states, dtype=np.float64).reshape(-1, D)
        if len(states):
            out.append(states)
    return out


def fit_model(gt_tracks):
    """Sample mean and (unbiased) variance of start states and mean velocities.

    ``gt_tracks`` holds `GroundTruthTrack` objects or plain ``(L, 4)`` arrays.
    Single-frame tracks contribute a start state but no velocity.
    """
    tracks = _track_arrays(gt_tracks)
    if len(tracks) < 2:
        raise InsufficientDataError("need at least two tracks to fit a trajectory model")
    starts = np.array([s[0] for s in tracks])
    vels = np.array([(s[-1] - s[0]) / (len(s) - 1) for s in tracks if len(s) > 1])
    if len(vels) < 2:
        raise InsufficientDataError("need at least two multi-frame tracks for velocity statistics")
    return TrajectoryModel(
        starts.mean(axis=0), starts.var(axis=0, ddof=1), vels.mean(axis=0), vels.var(axis=0, ddof=1)
    )


def _inside(states, r):
    xy_ok = np.all(np.abs(states[:, :2]) <= r, axis=1)
    wh_ok = np.all((states[:, 2:] >= MIN_SIZE) & (states[:, 2:] <= r), axis=1)
    return xy_ok & wh_ok


def _sample_track(model, cfg, rng, track_id, max_tries=100):
    T = cfg.seq_length
    if cfg.birth_spread:
        birth = int(rng.integers(0, T - MIN_TRACK_LENGTH + 1))
    else:
        birth = 0
    death = int(rng.integers(birth + MIN_TRACK_LENGTH - 1, T))
    steps = np.arange(death - birth + 1)[:, None]
    for _ in range(max_tries):
        x0 = rng.normal(model.start_mean, np.sqrt(model.start_var))
        v = rng.normal(model.vel_mean, np.sqrt(model.vel_var))
        states = x0 + steps * v
        ok = _inside(states, cfg.working_range)
        if ok[:MIN_TRACK_LENGTH].all():
            break
    else:
        raise InvalidArgument("trajectory model keeps producing tracks outside the working range")
    n_ok = len(ok) if ok.all() else int(np.argmin(ok))
    return GroundTruthTrack(track_id, birth, birth + n_ok - 1, states[:n_ok])


def _clutter_boxes(model, n, rng):
    xy = rng.uniform(-0.5, 0.5, size=(n, 2))
    wh = rng.normal(model.start_mean[2:], np.sqrt(model.start_var[2:]), size=(n, 2))
    return np.concatenate([xy, np.clip(wh, MIN_SIZE, 0.5)], axis=1)


def sample_sequence(model=None, cfg=None, rng=None):
    """Draw one labelled scene. Deterministic given ``cfg.seed`` (or ``rng``)."""
    model = TrajectoryModel() if model is None else model
    cfg = SceneConfig() if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n_targets = int(rng.integers(cfg.min_targets, cfg.max_targets + 1))
    tracks = [_sample_track(model, cfg, rng, k + 1) for k in range(n_targets)]

    frames = []
    for t in range(cfg.seq_length):
        boxes, src = [], []
        for tr in tracks:
            if tr.alive(t) and rng.random() < cfg.detection_prob:
                boxes.append(tr.state_at(t) + rng.normal(0.0, cfg.detection_noise, D))
                src.append(tr.id)
        n_clutter = int(rng.poisson(cfg.clutter_rate))
        if n_clutter:
            boxes.extend(_clutter_boxes(model, n_clutter, rng))
            src.extend([CLUTTER] * n_clutter)
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, D)
        src = np.asarray(src, dtype=np.int64)
        perm = rng.permutation(len(boxes))[:cfg.max_detections]
        frames.append(MeasurementFrame.from_boxes(boxes[perm], cfg.max_detections, src[perm]))
    return SceneSequence(tracks, frames)


def sequence_rngs(seed, n):
    """Independent generators for ``n`` sequences derived from one master
    seed via ``numpy.random.SeedSequence(seed).spawn(n)``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def sample_sequences(model, cfg, n):
    return [sample_sequence(model, cfg, rng) for rng in sequence_rngs(cfg.seed, n)]


def clutter_counts(scene):
    return np.array([int(np.sum(fr.source == CLUTTER)) for fr in scene.frames])


__all__ = [
    "CLUTTER", "EMPTY", "TrajectoryModel", "SceneConfig", "fit_model", "sample_sequence",
    "sample_sequences", "sequence_rngs", "clutter_counts",
]
