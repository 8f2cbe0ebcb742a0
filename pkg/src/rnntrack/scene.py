"""Shared containers: detection frames, ground truth and track tables.

A target state is a length-4 vector ``(x, y, w, h)``: box left, top, width and
height, each mapped to image-relative coordinates by ``v / size - 0.5`` (see
`rnntrack.io.normalize_coords`). Internal frame indices are 0-based; the
``frame`` column of a `Tracks` table is 1-based as in MOTChallenge files.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

D = 4
CLUTTER = -1
EMPTY = -2


@dataclass
class MeasurementFrame:
    """Up to M detections in fixed slots. Unused slots hold zeros and are
    masked out; ``source`` records the generating track id, ``CLUTTER`` or
    ``EMPTY`` when known."""

    boxes: np.ndarray
    mask: np.ndarray
    source: np.ndarray = None

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, D)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (len(self.boxes),):
            raise InvalidArgument("mask must have one entry per slot")
        if self.source is None:
            self.source = np.where(self.mask, CLUTTER, EMPTY)
        self.source = np.asarray(self.source, dtype=np.int64)
        self.boxes[~self.mask] = 0.0

    @property
    def max_detections(self):
        return len(self.boxes)

    @property
    def count(self):
        return int(self.mask.sum())

    @property
    def detections(self):
        return self.boxes[self.mask]

    @classmethod
    def from_boxes(cls, boxes, max_detections=None, source=None):
        """Pack detections into the first slots; extra detections beyond
        ``max_detections`` are dropped."""
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, D)
        m = len(boxes) if max_detections is None else max_detections
        k = min(len(boxes), m)
        slots = np.zeros((m, D))
        slots[:k] = boxes[:k]
        mask = np.zeros(m, dtype=bool)
        mask[:k] = True
        src = np.full(m, EMPTY, dtype=np.int64)
        src[:k] = CLUTTER if source is None else np.asarray(source)[:k]
        return cls(slots, mask, src)

    @classmethod
    def empty(cls, max_detections):
        return cls.from_boxes(np.zeros((0, D)), max_detections)


@dataclass
class GroundTruthTrack:
    """A target alive on frames ``birth..death`` (inclusive, 0-based)."""

    id: int
    birth: int
    death: int
    states: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64).reshape(-1, D)
        if len(self.states) != self.death - self.birth + 1:
            raise InvalidArgument("states must cover birth..death")

    def alive(self, t):
        return self.birth <= t <= self.death

    def state_at(self, t):
        return self.states[t - self.birth]


@dataclass
class SceneSequence:
    """Ground-truth tracks plus the detection frames they generated."""

    gt_tracks: list
    frames: list
    image_size: tuple = (1920, 1080)

    @property
    def n_frames(self):
        return len(self.frames)

    def existence(self):
        """Box-function existence signal, shape ``(n_tracks, n_frames)``."""
        ex = np.zeros((len(self.gt_tracks), self.n_frames))
        for k, tr in enumerate(self.gt_tracks):
            ex[k, tr.birth:tr.death + 1] = 1.0
        return ex

    def gt_table(self):
        rows = []
        for tr in self.gt_tracks:
            for t in range(tr.birth, tr.death + 1):
                rows.append((t + 1, tr.id, *tr.state_at(t)))
        return Tracks.from_rows(rows)

    def detection_table(self):
        rows = []
        for t, fr in enumerate(self.frames):
            for box in fr.detections:
                rows.append((t + 1, -1, *box))
        return Tracks.from_rows(rows)


@dataclass
class Tracks:
    """Flat table of boxes: 1-based ``frame``, ``id``, normalised ``boxes``
    and a per-row ``score`` (detection confidence or existence)."""

    frame: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    id: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, D)))
    score: np.ndarray = None

    def __post_init__(self):
        self.frame = np.asarray(self.frame, dtype=np.int64).reshape(-1)
        self.id = np.asarray(self.id, dtype=np.int64).reshape(-1)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, D)
        if self.score is None:
            self.score = np.ones(len(self.frame))
        self.score = np.asarray(self.score, dtype=np.float64).reshape(-1)
        n = len(self.frame)
        if not (len(self.id) == len(self.boxes) == len(self.score) == n):
            raise InvalidArgument("Tracks columns must have equal length")

    @classmethod
    def from_rows(cls, rows):
        """Rows of ``(frame, id, x, y, w, h[, score])``."""
        if not rows:
            return cls()
        arr = np.asarray(rows, dtype=np.float64)
        score = arr[:, 6] if arr.shape[1] > 6 else None
        return cls(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2:6], score)

    def __len__(self):
        return len(self.frame)

    @property
    def n_frames(self):
        return int(self.frame.max()) if len(self) else 0

    def sorted(self):
        order = np.lexsort((self.id, self.frame))
        return Tracks(self.frame[order], self.id[order], self.boxes[order], self.score[order])

    def by_frame(self):
        """Dict ``frame -> (ids, boxes, scores)``."""
        out = {}
        for f in np.unique(self.frame):
            sel = self.frame == f
            out[int(f)] = (self.id[sel], self.boxes[sel], self.score[sel])
        return out

    def track_ids(self):
        return np.unique(self.id)

    def select(self, keep):
        keep = np.asarray(keep, dtype=bool)
        return Tracks(self.frame[keep], self.id[keep], self.boxes[keep], self.score[keep])

    @staticmethod
    def concat(tables):
        tables = [t for t in tables if len(t)]
        if not tables:
            return Tracks()
        return Tracks(
            np.concatenate([t.frame for t in tables]),
            np.concatenate([t.id for t in tables]),
            np.concatenate([t.boxes for t in tables]),
            np.concatenate([t.score for t in tables]),
        )

    def equals(self, other, atol=0.0):
        a, b = self.sorted(), other.sorted()
        return (
            len(a) == len(b)
            and np.array_equal(a.frame, b.frame)
            and np.array_equal(a.id, b.id)
            and np.allclose(a.boxes, b.boxes, atol=atol, rtol=0)
            and np.allclose(a.score, b.score, atol=atol, rtol=0)
        )
