import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from rnntrack.datagen import SceneConfig, sample_sequence
from rnntrack.errors import InvalidArgument
from rnntrack.metrics import SUMMARY_COLUMNS, combine, evaluate, iou, summary_line, write_summary
from rnntrack.scene import Tracks
from support import noisy_hypotheses


def box(k):
    """Disjoint boxes in normalised units, one per index."""
    return (-0.45 + 0.09 * (k % 10), -0.45 + 0.2 * (k // 10), -0.46, -0.4)


def table(rows):
    return Tracks.from_rows([(f, i, *b) for f, i, b in rows])


def two_track_scene(n_frames=6):
    return table([(f, g, box(g)) for f in range(1, n_frames + 1) for g in (1, 2)])


class TestIou:
    def test_identity_and_disjoint(self):
        b = np.array([box(0), box(1)])
        assert_allclose(iou(b, b), np.eye(2), atol=1e-15)

    def test_half_overlap(self):
        a = np.array([[0.0, 0.0, -0.4, -0.4]])
        b = np.array([[0.05, 0.0, -0.4, -0.4]])
        assert iou(a, b)[0, 0] == pytest.approx(0.05 / 0.15)


class TestExamples:
    def test_perfect(self):
        gt = two_track_scene()
        r = evaluate(gt, gt)
        assert r.mota == 1.0 and r.motp == 1.0
        assert (r.fp, r.fn, r.id_switches, r.fragmentations) == (0, 0, 0, 0)
        assert r.mostly_tracked == 2 and r.mostly_lost == 0
        assert r.recall == 1.0 and r.precision == 1.0

    def test_eight_of_ten(self):
        gt = table([(k + 1, k + 1, box(k)) for k in range(10)])
        hyp = table([(k + 1, 100 + k, box(k)) for k in range(8)])
        r = evaluate(gt, hyp)
        assert (r.fn, r.fp, r.id_switches) == (2, 0, 0)
        assert r.mota == pytest.approx(0.8)
        assert r.recall == pytest.approx(0.8)
        assert r.precision == 1.0

    def test_identity_swap(self):
        # both gt tracks are unannotated on frame 3 and the hypotheses swap
        # identities across that gap
        gt = table([(f, g, box(g)) for f in (1, 2, 4, 5) for g in (1, 2)])
        hyp = table([(f, 10 + (g if f < 3 else 3 - g), box(g)) for f in (1, 2, 4, 5) for g in (1, 2)])
        r = evaluate(gt, hyp)
        assert r.id_switches == 2
        assert r.fragmentations == 2
        assert (r.fp, r.fn) == (0, 0)
        assert r.mota == pytest.approx(1 - 2 / 8)


class TestRules:
    def test_switch_without_gap(self):
        gt = two_track_scene(4)
        hyp = table([(f, 10 + (g if f < 3 else 3 - g), box(g)) for f in range(1, 5) for g in (1, 2)])
        r = evaluate(gt, hyp)
        assert (r.id_switches, r.fragmentations) == (2, 0)

    def test_fragmentation_from_missed_frame(self):
        gt = table([(f, 1, box(1)) for f in range(1, 6)])
        hyp = table([(f, 7, box(1)) for f in (1, 2, 4, 5)])
        r = evaluate(gt, hyp)
        assert (r.fragmentations, r.fn, r.id_switches) == (1, 1, 0)

    def test_sticky_match_survives_better_candidate(self):
        a = (0.0, 0.0, -0.4, -0.4)
        near = (0.02, 0.0, -0.4, -0.4)
        gt = table([(1, 1, a), (2, 1, a)])
        hyp = table([(1, 5, near), (2, 5, near), (2, 6, a)])
        r = evaluate(gt, hyp)
        assert r.id_switches == 0 and r.fp == 1

    def test_mostly_tracked_and_lost(self):
        gt = table([(f, g, box(g)) for f in range(1, 11) for g in (1, 2, 3)])
        hyp = table([(f, 1, box(1)) for f in range(1, 10)]
                    + [(f, 2, box(2)) for f in range(1, 6)]
                    + [(1, 3, box(3))])
        r = evaluate(gt, hyp)
        assert (r.mostly_tracked, r.mostly_lost) == (1, 1)

    def test_duplicate_ids_rejected(self):
        gt = table([(1, 1, box(1)), (1, 1, box(2))])
        with pytest.raises(InvalidArgument):
            evaluate(gt, gt)

    def test_empty_ground_truth(self):
        with pytest.raises(InvalidArgument):
            evaluate(Tracks(), Tracks())

    def test_threshold_range(self):
        gt = two_track_scene()
        with pytest.raises(InvalidArgument):
            evaluate(gt, gt, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_relabelling_invariance(seed, perm_seed):
    gt, hyp = noisy_hypotheses(seed)
    ids = np.unique(hyp.id)
    new = np.random.default_rng(perm_seed).permutation(1000)[:len(ids)]
    mapping = dict(zip(ids.tolist(), new.tolist()))
    relabelled = Tracks(hyp.frame, np.array([mapping[i] for i in hyp.id]), hyp.boxes, hyp.score)
    assert evaluate(gt, hyp).as_dict() == evaluate(gt, relabelled).as_dict()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_clutter_box_adds_one_false_positive(seed):
    gt, hyp = noisy_hypotheses(seed)
    base = evaluate(gt, hyp).as_dict()
    far = Tracks([1], [999], [[0.45, 0.45, -0.49, -0.49]])
    more = evaluate(gt, Tracks.concat([hyp, far])).as_dict()
    assert more.pop("fp") == base.pop("fp") + 1
    for k in ("precision", "mota"):
        more.pop(k)
        base.pop(k)
    assert more == base


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mota_identity_and_fixed_point(seed):
    gt, hyp = noisy_hypotheses(seed)
    r = evaluate(gt, hyp)
    assert r.mota == 1 - (r.fn + r.fp + r.id_switches) / r.total_gt
    assert r.recall == r.tp / (r.tp + r.fn)
    assert min(r.fp, r.fn, r.id_switches, r.fragmentations) >= 0
    perfect = evaluate(gt, gt)
    assert perfect.mota == 1.0 and perfect.fn == perfect.fp == 0


def test_combine_pools_counts():
    gt1, hyp1 = noisy_hypotheses(1)
    gt2, hyp2 = noisy_hypotheses(2)
    r1, r2 = evaluate(gt1, hyp1), evaluate(gt2, hyp2)
    c = combine([r1, r2])
    assert c.fp == r1.fp + r2.fp and c.total_gt == r1.total_gt + r2.total_gt
    assert c.mota == pytest.approx(1 - (c.fn + c.fp + c.id_switches) / c.total_gt)


def test_summary_outputs(tmp_path):
    gt = two_track_scene()
    r = evaluate(gt, gt)
    path = tmp_path / "s.csv"
    write_summary(r, path, "demo")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["Name", *SUMMARY_COLUMNS]
    assert rows[1][0] == "demo" and float(rows[1][SUMMARY_COLUMNS.index("MOTA") + 1]) == 100.0
    assert "MOTA=100.0" in summary_line(r)
