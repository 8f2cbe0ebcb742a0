"""Classical baselines: a constant-velocity Kalman filter per box component
with Hungarian matching.

`run_kalman_ha` starts a track at every unassigned detection and drops a
track the first frame it goes unmatched. `run_kalman_ha2` lets tracks coast
through short gaps and afterwards deletes tracks that are too short.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import MISS, solve_lap
from .errors import InvalidArgument, NumericError
from .scene import Tracks

VELOCITY_VAR_FACTOR = 10.0
PSD_TOL = 1e-12


@dataclass
class KalmanTrack:
    """Mean ``[positions; velocities]`` (length ``2d``) and covariance."""

    mean: np.ndarray
    cov: np.ndarray
    id: int = 0
    age: int = 1
    misses: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        n = len(self.mean)
        if n % 2 or self.cov.shape != (n, n):
            raise InvalidArgument("mean must have even length 2d and cov shape (2d, 2d)")

    @property
    def dim(self):
        return len(self.mean) // 2

    @property
    def position(self):
        return self.mean[:self.dim]

    @property
    def velocity(self):
        return self.mean[self.dim:]

    @classmethod
    def new(cls, z, pos_var, track_id=0):
        """Zero-velocity track at ``z`` with velocity variance inflated 10x."""
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        d = len(z)
        var = np.concatenate([np.full(d, pos_var), np.full(d, VELOCITY_VAR_FACTOR * pos_var)])
        return cls(np.concatenate([z, np.zeros(d)]), np.diag(var), track_id)


def check_covariance(cov, what="covariance"):
    """Raise `NumericError` unless ``cov`` is symmetric positive (semi)definite.

    Cholesky is tried first; a singular but PSD matrix (e.g. after a
    noise-free update) is accepted within a small eigenvalue tolerance.
    """
    if not np.all(np.isfinite(cov)):
        raise NumericError(f"{what} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
        raise NumericError(f"{what} is not symmetric")
    try:
        np.linalg.cholesky(cov)
        return
    except np.linalg.LinAlgError:
        pass
    if np.min(np.linalg.eigvalsh(cov)) < -PSD_TOL * scale:
        raise NumericError(f"{what} is not positive semidefinite")


def _transition(d):
    F = np.eye(2 * d)
    F[:d, d:] = np.eye(d)
    return F


def kalman_predict(track, process_noise):
    """Constant-velocity step ``x <- x + v`` with ``P <- F P F' + q I``."""
    check_covariance(track.cov)
    F = _transition(track.dim)
    mean = F @ track.mean
    cov = F @ track.cov @ F.T + process_noise * np.eye(2 * track.dim)
    cov = 0.5 * (cov + cov.T)
    check_covariance(cov, "predicted covariance")
    return replace(track, mean=mean, cov=cov)


def kalman_update(track, z, meas_noise):
    """Correct the position block with measurement ``z`` (noise ``r I``).

    ``meas_noise = inf`` leaves the track unchanged.
    """
    check_covariance(track.cov)
    d = track.dim
    z = np.asarray(z, dtype=np.float64).reshape(d)
    if np.isinf(meas_noise):
        return replace(track, mean=track.mean.copy(), cov=track.cov.copy())
    P = track.cov
    S = P[:d, :d] + meas_noise * np.eye(d)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NumericError("innovation covariance is singular") from None
    # K = P H' S^-1, solved through the Cholesky factor
    PHt = P[:, :d]
    K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
    mean = track.mean + K @ (z - track.mean[:d])
    I_KH = np.eye(2 * d)
    I_KH[:, :d] -= K
    # Joseph form keeps the covariance symmetric and PSD
    cov = I_KH @ P @ I_KH.T + meas_noise * K @ K.T
    cov = 0.5 * (cov + cov.T)
    return replace(track, mean=mean, cov=cov)


@dataclass
class HeuristicConfig:
    """Filter noise, gating and the track-management heuristics.

    ``max_misses = 0`` with ``min_track_length = 1`` reduces Kalman-HA2 to
    Kalman-HA.
    """

    min_track_length: int = 3
    max_misses: int = 2
    gate_distance: float = 0.3
    process_noise: float = 1e-4
    meas_noise: float = 1e-3

    def __post_init__(self):
        if self.min_track_length < 1:
            raise InvalidArgument("min_track_length must be positive")
        if self.max_misses < 0:
            raise InvalidArgument("max_misses must be non-negative")
        if self.gate_distance <= 0:
            raise InvalidArgument("gate_distance must be positive")
        if self.process_noise < 0 or self.meas_noise < 0:
            raise InvalidArgument("noise levels must be non-negative")

    @classmethod
    def from_run_config(cls, cfg):
        return cls(cfg.ha2_min_length, cfg.ha2_max_misses, cfg.kalman_gate, cfg.kalman_q,
                   cfg.kalman_r)


@dataclass
class _Record:
    rows: list = field(default_factory=list)
    pending: list = field(default_factory=list)


def _gated_costs(tracks, dets, gate):
    if not tracks or not len(dets):
        return np.zeros((len(tracks), len(dets)))
    pos = np.array([t.position for t in tracks])
    c = np.sqrt(np.sum((pos[:, None, :] - dets[None, :, :]) ** 2, axis=-1))
    c[c > gate] = np.inf
    return c


def _run(frames, cfg):
    live, records, next_id = [], {}, 1
    for t, frame in enumerate(frames, start=1):
        dets = frame.detections
        live = [kalman_predict(tr, cfg.process_noise) for tr in live]
        c = _gated_costs(live, dets, cfg.gate_distance)
        cols = solve_lap(c, cfg.gate_distance).cols if live else ()
        used = set()
        survivors = []
        for tr, j in zip(live, cols):
            rec = records[tr.id]
            if j != MISS:
                used.add(j)
                tr = kalman_update(tr, dets[j], cfg.meas_noise)
                tr = replace(tr, age=tr.age + 1, misses=0)
                rec.rows.extend(rec.pending)
                rec.pending.clear()
                rec.rows.append((t, tr.id, *tr.position))
                survivors.append(tr)
            elif tr.misses < cfg.max_misses:
                tr = replace(tr, age=tr.age + 1, misses=tr.misses + 1)
                rec.pending.append((t, tr.id, *tr.position))
                survivors.append(tr)
        for j in range(len(dets)):
            if j not in used:
                tr = KalmanTrack.new(dets[j], max(cfg.meas_noise, PSD_TOL), next_id)
                records[next_id] = _Record([(t, next_id, *tr.position)])
                survivors.append(tr)
                next_id += 1
        live = survivors
    rows = []
    for rec in records.values():
        # coasted rows after the last match are dropped with the track
        frames_spanned = rec.rows[-1][0] - rec.rows[0][0] + 1
        if frames_spanned >= cfg.min_track_length:
            rows.extend(rec.rows)
    return Tracks.from_rows(rows).sorted()


def run_kalman_ha(frames, cfg=None):
    """Kalman filter + Hungarian matching without coasting or filtering."""
    cfg = HeuristicConfig() if cfg is None else cfg
    return _run(frames, replace(cfg, max_misses=0, min_track_length=1))


def run_kalman_ha2(frames, cfg=None):
    """Kalman-HA with coasting over up to ``max_misses`` frames and removal
    of tracks spanning fewer than ``min_track_length`` frames."""
    return _run(frames, HeuristicConfig() if cfg is None else cfg)


__all__ = [
    "KalmanTrack", "HeuristicConfig", "kalman_predict", "kalman_update", "check_covariance",
    "run_kalman_ha", "run_kalman_ha2",
]
