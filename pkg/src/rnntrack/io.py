"""MOTChallenge-style CSV files and coordinate normalisation.

Every row is ``frame, id, bb_left, bb_top, bb_width, bb_height, conf, x, y,
z`` with 1-based frames and boxes in pixels. Detection files use ``id = -1``;
the last three fields are always ``-1``. Internally boxes are normalised
with ``v / size - 0.5`` per coordinate.
"""

import csv

import numpy as np

from .errors import InvalidArgument, ParseError
from .scene import CLUTTER, D, GroundTruthTrack, MeasurementFrame, SceneSequence, Tracks

N_FIELDS = 10
PRECISION = 6


def _scales(image_width, image_height):
    if image_width <= 0 or image_height <= 0:
        raise InvalidArgument("image dimensions must be positive")
    return np.array([image_width, image_height, image_width, image_height], dtype=np.float64)


def normalize_coords(rows, image_width, image_height):
    """Pixel boxes ``(n, 4)`` -> normalised states."""
    s = _scales(image_width, image_height)
    return np.asarray(rows, dtype=np.float64).reshape(-1, D) / s - 0.5


def denormalize_coords(states, image_width, image_height):
    s = _scales(image_width, image_height)
    return (np.asarray(states, dtype=np.float64).reshape(-1, D) + 0.5) * s


def parse_mot_csv(path):
    """Read a MOT CSV into a `Tracks` table with boxes still in pixels.

    Blank lines are skipped; an empty file gives an empty table.
    """
    rows = []
    with open(path, newline="") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != N_FIELDS:
                raise ParseError(f"expected {N_FIELDS} fields, got {len(fields)}", n)
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise ParseError("non-numeric field", n) from None
            if not all(np.isfinite(vals)):
                raise ParseError("non-finite field", n)
            if vals[0] < 1 or vals[0] != int(vals[0]) or vals[1] != int(vals[1]):
                raise ParseError("frame must be a positive integer and id an integer", n)
            if vals[4] <= 0 or vals[5] <= 0:
                raise ParseError("box width and height must be positive", n)
            rows.append(vals[:7])
    if not rows:
        return Tracks()
    arr = np.array(rows)
    return Tracks(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2:6], arr[:, 6])


def read_tracks(path, image_width, image_height):
    """A ground-truth or results file as a normalised `Tracks` table."""
    t = parse_mot_csv(path)
    return Tracks(t.frame, t.id, normalize_coords(t.boxes, image_width, image_height), t.score)


def tracks_to_frames(table, max_detections=None, n_frames=None, sources=None):
    """Group a normalised detection table into `MeasurementFrame` objects.

    Frames without detections become empty frames. When a frame holds more
    than ``max_detections`` boxes the most confident ones are kept.
    """
    n_frames = table.n_frames if n_frames is None else n_frames
    groups = [[] for _ in range(n_frames)]
    for r in range(len(table)):
        f = int(table.frame[r])
        if f <= n_frames:
            groups[f - 1].append(r)
    if max_detections is None:
        max_detections = max((len(g) for g in groups), default=0)
    src = np.full(len(table), CLUTTER, dtype=np.int64) if sources is None else sources
    frames = []
    for g in groups:
        g = sorted(g, key=lambda r: -table.score[r])[:max_detections]
        frames.append(MeasurementFrame.from_boxes(table.boxes[g], max_detections, src[g]))
    return frames


def read_detections(path, image_width, image_height, max_detections=None, n_frames=None):
    return tracks_to_frames(read_tracks(path, image_width, image_height), max_detections, n_frames)


def _fmt(v):
    return f"{v:.{PRECISION}f}"


def write_mot_csv(path, table, image_width, image_height, detections=False):
    """Write a normalised `Tracks` table in pixels, sorted by frame then id
    (detection files keep their row order within a frame)."""
    if detections:
        order = np.argsort(table.frame, kind="stable")
        t = Tracks(table.frame[order], table.id[order], table.boxes[order], table.score[order])
    else:
        t = table.sorted()
    px = denormalize_coords(t.boxes, image_width, image_height)
    with open(path, "w", newline="") as fh:
        for r in range(len(t)):
            tid = -1 if detections else int(t.id[r])
            fh.write(",".join([str(int(t.frame[r])), str(tid), *map(_fmt, px[r]),
                               _fmt(t.score[r]), "-1", "-1", "-1"]) + "\n")


def write_scene(scene, gt_path, det_path, provenance_path):
    """Ground truth, detections and a provenance sidecar for one scene.

    The sidecar has one row per detection, in detection-file order:
    ``frame, index, source`` where ``source`` is the generating track id or
    -1 for clutter.
    """
    W, H = scene.image_size
    write_mot_csv(gt_path, scene.gt_table(), W, H)
    rows, prov = [], []
    for t, fr in enumerate(scene.frames, start=1):
        for k, j in enumerate(np.flatnonzero(fr.mask)):
            rows.append((t, -1, *fr.boxes[j], 1.0))
            prov.append((t, k, int(fr.source[j])))
    write_mot_csv(det_path, Tracks.from_rows(rows), W, H, detections=True)
    with open(provenance_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "index", "source"])
        w.writerows(prov)


def read_scene(gt_path, det_path, provenance_path, n_frames, max_detections,
               image_size=(1920, 1080)):
    """Inverse of `write_scene`."""
    W, H = image_size
    gt = read_tracks(gt_path, W, H)
    tracks = []
    for tid in gt.track_ids():
        sel = gt.frame[gt.id == tid]
        order = np.argsort(sel)
        boxes = gt.boxes[gt.id == tid][order]
        frames = sel[order]
        if np.any(np.diff(frames) != 1):
            raise ParseError(f"ground-truth track {tid} is not contiguous")
        tracks.append(GroundTruthTrack(int(tid), int(frames[0]) - 1, int(frames[-1]) - 1, boxes))
    det = read_tracks(det_path, W, H)
    src = np.full(len(det), CLUTTER, dtype=np.int64)
    with open(provenance_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        prov = [int(r[2]) for r in reader if r]
    if len(prov) != len(det):
        raise ParseError("provenance sidecar does not match the detection file")
    src[:] = prov
    frames = tracks_to_frames(det, max_detections, n_frames, src)
    return SceneSequence(tracks, frames, tuple(image_size))


def write_existence_csv(path, log):
    """Per-frame existence dump: ``frame, id, existence, source``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "id", "existence", "source"])
        for frame, tid, e, src in log:
            w.writerow([frame, tid, f"{e:.6f}", src])


__all__ = [
    "normalize_coords", "denormalize_coords", "parse_mot_csv", "read_tracks", "read_detections",
    "tracks_to_frames", "write_mot_csv", "write_scene", "read_scene", "write_existence_csv",
]
