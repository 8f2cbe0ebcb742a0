"""CLEAR MOT evaluation.

Boxes are matched per frame on intersection-over-union. A ground-truth
object keeps its hypothesis from the previous frame while their IoU stays
above the threshold; the rest are matched by a maximum-cardinality,
minimum-cost assignment on ``1 - IoU``.
"""

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .assignment import MISS, solve_lap
from .errors import InvalidArgument

MATCH_THRESHOLD = 0.5
MT_RATIO = 0.8
ML_RATIO = 0.2
SUMMARY_COLUMNS = ("Rcll", "Prcn", "MT", "ML", "FP", "FN", "IDs", "FM", "MOTA", "MOTP")


def box_corners(boxes):
    """``(x, y, w, h)`` in normalised units -> ``(x1, y1, x2, y2)`` in image
    fractions (widths map back through ``w + 0.5``)."""
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    x1, y1 = b[:, 0] + 0.5, b[:, 1] + 0.5
    return np.stack([x1, y1, x1 + b[:, 2] + 0.5, y1 + b[:, 3] + 0.5], axis=1)


def iou(a, b):
    """Pairwise IoU matrix between box sets ``a`` (n, 4) and ``b`` (m, 4)."""
    ca, cb = box_corners(a), box_corners(b)
    ix = np.minimum(ca[:, None, 2], cb[None, :, 2]) - np.maximum(ca[:, None, 0], cb[None, :, 0])
    iy = np.minimum(ca[:, None, 3], cb[None, :, 3]) - np.maximum(ca[:, None, 1], cb[None, :, 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    area_a = (ca[:, 2] - ca[:, 0]) * (ca[:, 3] - ca[:, 1])
    area_b = (cb[:, 2] - cb[:, 0]) * (cb[:, 3] - cb[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


@dataclass
class EvalResult:
    recall: float
    precision: float
    mostly_tracked: int
    mostly_lost: int
    fp: int
    fn: int
    id_switches: int
    fragmentations: int
    mota: float
    motp: float
    # raw accumulators, so results from several sequences can be pooled
    tp: int = 0
    total_gt: int = 0
    iou_sum: float = 0.0
    n_gt_tracks: int = 0

    def summary_row(self):
        """Values in summary-column order, percentages for ratios."""
        return [100 * self.recall, 100 * self.precision, self.mostly_tracked, self.mostly_lost,
                self.fp, self.fn, self.id_switches, self.fragmentations, 100 * self.mota,
                100 * self.motp]

    def as_dict(self):
        return asdict(self)


def _finish(tp, fp, fn, ids, fm, mt, ml, total_gt, iou_sum, n_tracks):
    if total_gt == 0:
        raise InvalidArgument("ground truth is empty")
    return EvalResult(
        recall=tp / total_gt,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        mostly_tracked=mt, mostly_lost=ml, fp=fp, fn=fn, id_switches=ids, fragmentations=fm,
        mota=1.0 - (fn + fp + ids) / total_gt,
        motp=iou_sum / tp if tp else 0.0,
        tp=tp, total_gt=total_gt, iou_sum=iou_sum, n_gt_tracks=n_tracks,
    )


def combine(results):
    """Pool per-sequence results by summing their counts."""
    results = list(results)
    keys = ("tp", "fp", "fn", "id_switches", "fragmentations", "mostly_tracked", "mostly_lost",
            "total_gt", "n_gt_tracks")
    s = {k: sum(getattr(r, k) for r in results) for k in keys}
    return _finish(s["tp"], s["fp"], s["fn"], s["id_switches"], s["fragmentations"],
                   s["mostly_tracked"], s["mostly_lost"], s["total_gt"],
                   math.fsum(r.iou_sum for r in results), s["n_gt_tracks"])


def _check_unique(ids, frame, which):
    if len(np.unique(ids)) != len(ids):
        raise InvalidArgument(f"duplicate {which} id in frame {frame}")


def evaluate(gt, hyp, match_threshold=MATCH_THRESHOLD):
    """CLEAR MOT counts of `Tracks` ``hyp`` against `Tracks` ``gt``."""
    if not 0.0 < match_threshold <= 1.0:
        raise InvalidArgument("match_threshold must lie in (0, 1]")
    gt_frames, hyp_frames = gt.by_frame(), hyp.by_frame()
    empty = (np.zeros(0, dtype=np.int64), np.zeros((0, 4)), np.zeros(0))
    tp = fp = fn = ids = 0
    iou_sum = 0.0
    last_match = {}  # gt id -> hyp id of its most recent match
    prev_match = {}  # gt id -> hyp id matched in the previous frame
    tracked = {}  # gt id -> {frame: matched?}
    for f in sorted(set(gt_frames) | set(hyp_frames)):
        g_ids, g_boxes, _ = gt_frames.get(f, empty)
        h_ids, h_boxes, _ = hyp_frames.get(f, empty)
        _check_unique(g_ids, f, "ground-truth")
        _check_unique(h_ids, f, "hypothesis")
        overlap = iou(g_boxes, h_boxes)
        h_index = {int(h): j for j, h in enumerate(h_ids)}
        match = {}
        # keep last frame's pairs that still overlap enough
        for i, g in enumerate(g_ids):
            h = prev_match.get(int(g))
            j = h_index.get(h) if h is not None else None
            if j is not None and overlap[i, j] >= match_threshold:
                match[i] = j
        rows = [i for i in range(len(g_ids)) if i not in match]
        cols = [j for j in range(len(h_ids)) if j not in set(match.values())]
        if rows and cols:
            sub = 1.0 - overlap[np.ix_(rows, cols)]
            sub[overlap[np.ix_(rows, cols)] < match_threshold] = np.inf
            # a miss costs more than any set of valid matches, so the
            # assignment maximises the number of matches first
            for r, c in zip(rows, solve_lap(sub, float(len(rows) + 1)).cols):
                if c != MISS:
                    match[r] = cols[c]
        prev_match = {}
        for i, g in enumerate(g_ids):
            g = int(g)
            tracked.setdefault(g, {})[f] = i in match
            if i not in match:
                continue
            h = int(h_ids[match[i]])
            if g in last_match and last_match[g] != h:
                ids += 1
            last_match[g] = h
            prev_match[g] = h
            iou_sum += overlap[i, match[i]]
        tp += len(match)
        fn += len(g_ids) - len(match)
        fp += len(h_ids) - len(match)

    mt = ml = fm = 0
    for g, status in tracked.items():
        ratio = sum(status.values()) / len(status)
        mt += ratio > MT_RATIO
        ml += ratio < ML_RATIO
        # frames inside the span without a match (annotated or not) break a run
        first, last = min(status), max(status)
        runs, was = 0, False
        for f in range(first, last + 1):
            now = status.get(f, False)
            runs += now and not was
            was = now
        fm += max(runs - 1, 0)
    return _finish(tp, fp, fn, ids, fm, mt, ml, len(gt), iou_sum, len(tracked))


def write_summary(result, path, name=None):
    """One-row summary CSV in the conventional column order."""
    header = (["Name"] if name is not None else []) + list(SUMMARY_COLUMNS)
    values = [f"{v:.4f}" if isinstance(v, float) else str(v) for v in result.summary_row()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerow(([name] if name is not None else []) + values)


def summary_line(result):
    return " ".join(f"{k}={v:.1f}" if isinstance(v, float) else f"{k}={v}"
                    for k, v in zip(SUMMARY_COLUMNS, result.summary_row()))


__all__ = ["EvalResult", "evaluate", "combine", "iou", "write_summary", "summary_line",
           "SUMMARY_COLUMNS", "MATCH_THRESHOLD"]
