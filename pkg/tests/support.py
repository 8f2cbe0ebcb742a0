"""Shared helpers for the test suite: desk-scale training settings and
measurements used by several test modules."""

from collections import Counter, defaultdict

import numpy as np

from rnntrack.config import RunConfig
from rnntrack.datagen import SceneConfig, TrajectoryModel, sample_sequence

# desk-scale training runs (the full-size defaults take days on one core)
MOTION_CFG = RunConfig(motion_hidden=64, iterations=3000, learning_rate=1e-3, batch_size=20,
                       log_every=500, seed=0)
CLEAN_MOTION_CFG = MOTION_CFG.replace(detection_noise=0.0, detection_prob=1.0, clutter_rate=0.0)
ASSOC_CFG = RunConfig(assoc_max_targets=3, assoc_max_detections=5, max_targets=3,
                      max_detections=5, assoc_hidden=64, iterations=30000, learning_rate=1e-3,
                      lr_decay=0.7, lr_decay_every=5000, batch_size=20, log_every=5000, seed=0)


def straight_tracks(n, length, seed, model=None):
    """``(n, length, 4)`` noise-free constant-velocity tracks drawn from the
    trajectory model."""
    model = TrajectoryModel() if model is None else model
    rng = np.random.default_rng(seed)
    x0 = rng.normal(model.start_mean, np.sqrt(model.start_var), (n, 4))
    v = rng.normal(model.vel_mean, np.sqrt(model.vel_var), (n, 4))
    return x0[:, None, :] + np.arange(length)[None, :, None] * v[:, None, :]


def birth_death_delays(scene, log, threshold=0.6, window=3):
    """Per ground-truth target: frames from birth until some track fed by
    its detections reaches ``threshold``, and frames from its last
    detection until no such track stays above it.

    Tracker tracks are attributed to the target that produced most of their
    matched detections. A birth delay is None when no attributed track ever
    reaches the threshold. A death delay is None when the last detection is
    less than ``window`` frames before the end of the sequence, since the
    termination could not be observed.
    """
    owner = defaultdict(Counter)
    for _, tid, _, src in log:
        if src >= 0:
            owner[tid][src] += 1
    ids_of = defaultdict(set)
    for tid, counts in owner.items():
        ids_of[counts.most_common(1)[0][0]].add(tid)
    alive = defaultdict(set)
    for frame, tid, e, _ in log:
        if e >= threshold:
            alive[frame].add(tid)
    T = scene.n_frames
    out = []
    for g in scene.gt_tracks:
        seen = [t + 1 for t, fr in enumerate(scene.frames) if np.any(fr.source[fr.mask] == g.id)]
        if not seen:
            continue
        ids = ids_of.get(g.id, set())
        birth = g.birth + 1
        on = [f for f in range(birth, T + 1) if alive[f] & ids]
        born = on[0] - birth if on else None
        last = seen[-1]
        died = None
        if last + window <= T:
            off = [f for f in range(last + 1, T + 1) if not alive[f] & ids]
            died = off[0] - last if off else T + 1 - last
        out.append((born, died))
    return out


def noisy_hypotheses(seed):
    rng = np.random.default_rng(seed)
    scene = sample_sequence(cfg=SceneConfig(seed=seed % 1000))
    gt = scene.gt_table()
    keep = rng.random(len(gt)) < 0.8
    hyp = gt.select(keep)
    hyp.boxes = hyp.boxes + rng.normal(0, 0.004, hyp.boxes.shape)
    hyp.id = (hyp.id * 7 + rng.integers(0, 2, len(hyp))) % 13
    # keep ids unique within a frame
    seen = set()
    ok = []
    for f, i in zip(hyp.frame, hyp.id):
        ok.append((f, i) not in seen)
        seen.add((f, i))
    return gt, hyp.select(ok)


# (criterion number, passed, measured detail) rows collected by the
# acceptance suite and printed at the end of the run
ACCEPTANCE = []


def report(number, passed, detail):
    ACCEPTANCE.append((number, bool(passed), detail))
    return passed
