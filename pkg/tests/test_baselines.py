import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from rnntrack.baselines import (HeuristicConfig, KalmanTrack, check_covariance, kalman_predict,
                                kalman_update, run_kalman_ha, run_kalman_ha2)
from rnntrack.datagen import SceneConfig, sample_sequence
from rnntrack.errors import InvalidArgument, NumericError
from rnntrack.metrics import evaluate
from rnntrack.scene import MeasurementFrame


def track_1d(p, v, P):
    return KalmanTrack(np.array([p, v]), np.array(P, dtype=float))


def scalar_filter(p, v, P11, P12, P22, zs, q, r):
    """Hand recursion of a 1-D constant-velocity filter, one scalar at a time."""
    out = []
    for z in zs:
        p, P11, P12, P22 = p + v, P11 + 2 * P12 + P22 + q, P12 + P22, P22 + q
        S = P11 + r
        K1, K2 = P11 / S, P12 / S
        innov = z - p
        p, v = p + K1 * innov, v + K2 * innov
        P11, P12, P22 = (1 - K1) * P11, (1 - K1) * P12, P22 - K2 * P12
        out.append((p, v, P11, P12, P22))
    return out


class TestPredict:
    def test_static_track_unchanged(self):
        tr = track_1d(0.3, 0.0, [[0.2, 0.0], [0.0, 0.0]])
        out = kalman_predict(tr, 0.0)
        assert_array_equal(out.mean, tr.mean)
        assert_array_equal(out.cov, tr.cov)

    def test_position_advances_by_velocity(self):
        out = kalman_predict(track_1d(0.0, 1.0, np.eye(2)), 0.0)
        assert out.position[0] == 1.0

    def test_covariance_propagation(self):
        out = kalman_predict(track_1d(0.0, 0.0, [[1.0, 0.5], [0.5, 2.0]]), 0.1)
        assert_allclose(out.cov, [[4.1, 2.5], [2.5, 2.1]], rtol=1e-14)

    def test_indefinite_covariance_rejected(self):
        with pytest.raises(NumericError):
            kalman_predict(track_1d(0.0, 0.0, [[1.0, 0.0], [0.0, -1.0]]), 0.0)
        with pytest.raises(NumericError):
            check_covariance(np.array([[1.0, 0.5], [0.4, 1.0]]))


class TestUpdate:
    def test_closed_form_1d(self):
        tr = KalmanTrack(np.array([0.0, 0.0]), np.diag([1.0, 1.0]))
        out = kalman_update(tr, [1.0], 1.0)
        assert out.position[0] == pytest.approx(0.5)
        assert out.cov[0, 0] == pytest.approx(0.5)

    def test_exact_measurement(self):
        tr = KalmanTrack.new([0.1, 0.2, -0.4, -0.3], 1e-2)
        z = np.array([0.15, 0.18, -0.41, -0.29])
        assert_allclose(kalman_update(tr, z, 0.0).position, z, rtol=0, atol=1e-15)

    def test_infinite_noise_keeps_prior(self):
        tr = KalmanTrack.new([0.1, 0.2, -0.4, -0.3], 1e-2)
        out = kalman_update(tr, np.zeros(4), np.inf)
        assert_array_equal(out.mean, tr.mean)
        assert_array_equal(out.cov, tr.cov)

    def test_singular_innovation(self):
        tr = track_1d(0.0, 0.0, np.zeros((2, 2)))
        with pytest.raises(NumericError):
            kalman_update(tr, [1.0], 0.0)

    def test_three_step_hand_recursion(self):
        zs, q, r = [0.9, 2.1, 2.9], 0.01, 0.25
        tr = track_1d(0.0, 1.0, [[0.5, 0.1], [0.1, 0.3]])
        expected = scalar_filter(0.0, 1.0, 0.5, 0.1, 0.3, zs, q, r)
        for z, (p, v, P11, P12, P22) in zip(zs, expected):
            tr = kalman_update(kalman_predict(tr, q), [z], r)
            assert_allclose(tr.mean, [p, v], rtol=1e-12)
            assert_allclose(tr.cov, [[P11, P12], [P12, P22]], rtol=1e-12)
        # frozen output of the scalar recursion
        assert_allclose(tr.mean, [2.961012606550338, 0.9914507739197151], rtol=1e-12)
        assert tr.cov[0, 0] == pytest.approx(0.16107314051622806, rel=1e-12)

    def test_noise_free_linear_motion_is_exact(self):
        x0, v = np.array([0.1, -0.2, -0.4, -0.3]), np.array([0.01, -0.004, 0.001, 0.0])
        tr = KalmanTrack.new(x0, 1e-3)
        for k in (1, 2):
            tr = kalman_update(kalman_predict(tr, 0.0), x0 + k * v, 0.0)
        assert_allclose(tr.velocity, v, atol=1e-10)
        for k in range(3, 10):
            tr = kalman_predict(tr, 0.0)
            assert_allclose(tr.position, x0 + k * v, atol=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_posterior_variance_not_larger(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(8, 8))
        tr = KalmanTrack(rng.normal(size=8), A @ A.T + 1e-3 * np.eye(8))
        out = kalman_update(tr, rng.normal(size=4), float(rng.uniform(1e-4, 1.0)))
        assert np.all(np.diag(out.cov)[:4] <= np.diag(tr.cov)[:4] + 1e-12)


def test_long_run_stays_positive_definite():
    rng = np.random.default_rng(0)
    tr = KalmanTrack.new(rng.uniform(-0.5, 0.5, 4), 1e-3)
    for _ in range(1000):
        tr = kalman_predict(tr, float(rng.uniform(0, 1e-3)))
        tr = kalman_update(tr, tr.position + rng.normal(0, 0.01, 4), float(rng.uniform(1e-4, 1e-2)))
        assert np.max(np.abs(tr.cov - tr.cov.T)) <= 1e-10
        np.linalg.cholesky(tr.cov)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        HeuristicConfig(min_track_length=0)
    with pytest.raises(InvalidArgument):
        HeuristicConfig(max_misses=-1)
    with pytest.raises(InvalidArgument):
        HeuristicConfig(gate_distance=0.0)


def line_frames(n, gap=(), x0=(0.0, 0.0, -0.4, -0.3), v=(0.01, 0.0, 0.0, 0.0)):
    x0, v = np.array(x0), np.array(v)
    return [MeasurementFrame.from_boxes([] if t in gap else [x0 + t * v], 2) for t in range(n)]


class TestKalmanHA:
    def test_noiseless_single_target(self):
        cfg = SceneConfig(min_targets=1, max_targets=1, detection_prob=1.0, clutter_rate=0.0,
                          detection_noise=0.0, seed=3)
        scene = sample_sequence(cfg=cfg)
        out = run_kalman_ha(scene.frames)
        assert len(out.track_ids()) == 1
        r = evaluate(scene.gt_table(), out)
        assert r.id_switches == 0 and r.mota == 1.0

    def test_gap_spawns_new_identity(self):
        out = run_kalman_ha(line_frames(8, gap={4}))
        assert len(out.track_ids()) == 2
        assert set(out.frame[out.id == 1]) == {1, 2, 3, 4}
        assert set(out.frame[out.id == 2]) == {6, 7, 8}

    def test_empty_input(self):
        assert len(run_kalman_ha([])) == 0
        assert len(run_kalman_ha([MeasurementFrame.empty(3)] * 4)) == 0


class TestKalmanHA2:
    def test_single_frame_clutter_removed(self):
        frames = line_frames(6)
        frames[2] = MeasurementFrame.from_boxes([frames[2].boxes[0], [0.4, 0.4, -0.45, -0.45]], 2)
        out = run_kalman_ha2(frames)
        assert_array_equal(out.track_ids(), [1])

    def test_gap_bridged(self):
        out = run_kalman_ha2(line_frames(8, gap={4}), HeuristicConfig(max_misses=2))
        assert_array_equal(out.track_ids(), [1])
        assert_array_equal(out.frame, np.arange(1, 9))

    def test_trailing_coast_dropped(self):
        out = run_kalman_ha2(line_frames(8, gap={6, 7}))
        assert out.frame.max() == 6

    def test_degenerate_config_equals_ha(self):
        scene = sample_sequence(cfg=SceneConfig(seed=11))
        cfg = HeuristicConfig(max_misses=0, min_track_length=1)
        assert run_kalman_ha2(scene.frames, cfg).equals(run_kalman_ha(scene.frames))

    def test_deterministic(self):
        scene = sample_sequence(cfg=SceneConfig(seed=12))
        assert run_kalman_ha2(scene.frames).equals(run_kalman_ha2(scene.frames))
