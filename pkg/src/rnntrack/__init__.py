"""Online multi-target tracking with recurrent networks.

A motion RNN predicts, updates and scores the existence of every track, an
LSTM (or exact assignment) associates tracks with detections, and Kalman
baselines, a synthetic scene generator and CLEAR MOT metrics complete the
pipeline. Everything runs on numpy in float64.
"""

__version__ = "0.1.0"

from .assignment import MISS, brute_force_lap, solve_lap
from .association import AssocNet, assoc_forward, build_cost_matrix
from .baselines import HeuristicConfig, run_kalman_ha, run_kalman_ha2
from .config import RunConfig, load_config
from .datagen import SceneConfig, TrajectoryModel, sample_sequence
from .errors import (InsufficientDataError, InvalidArgument, NumericError, ParseError,
                     TrackingError)
from .metrics import EvalResult, evaluate
from .motion import LossWeights, MotionNet, motion_loss
from .scene import MeasurementFrame, SceneSequence, Tracks
from .tracker import Nets, TrackerConfig, run_sequence, step_frame
