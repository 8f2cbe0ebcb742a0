"""Run configuration: every tunable in one flat dataclass.

Config files are plain ``key = value`` lines; ``#`` starts a comment. Values
are converted to the field's type and validated, unknown keys are rejected.
"""

from dataclasses import asdict, dataclass, fields, replace

from .errors import InvalidArgument, ParseError


@dataclass(frozen=True)
class RunConfig:
    # optimiser and schedule
    learning_rate: float = 3e-4
    lr_decay: float = 0.95
    lr_decay_every: int = 20000
    iterations: int = 200000
    batch_size: int = 10
    rmsprop_decay: float = 0.95
    rmsprop_eps: float = 1e-8
    max_grad_norm: float = 5.0
    log_every: int = 100

    # motion model
    motion_hidden: int = 300
    update_hidden: int = 64
    loss_prediction: float = 1.0
    loss_update: float = 1.0
    loss_existence: float = 1.0
    loss_smoothness: float = 0.1
    init_existence: float = 0.5
    clutter_episodes: int = 3
    motion_detach_existence: bool = True
    motion_refit_every: int = 0
    motion_refit_batch: int = 200
    motion_refit_ridge: float = 1e-8

    # data association
    assoc_hidden: int = 500
    assoc_layers: int = 2
    assoc_embed: int = 0
    assoc_max_targets: int = 10
    assoc_max_detections: int = 10
    assoc_pred_noise: float = 0.01
    assoc_miss_cost: float = 0.15
    assoc_labels: str = "hungarian"

    # synthetic data
    seq_length: int = 20
    min_targets: int = 1
    max_targets: int = 5
    max_detections: int = 10
    detection_prob: float = 0.9
    clutter_rate: float = 1.0
    detection_noise: float = 0.01

    # tracker
    existence_threshold: float = 0.6
    assoc_mode: str = "hungarian"
    hard_assignment: str = "argmax"
    gate: float = 0.15
    max_live_tracks: int = 50

    # baselines
    kalman_q: float = 1e-4
    kalman_r: float = 1e-3
    kalman_gate: float = 0.3
    ha2_min_length: int = 3
    ha2_max_misses: int = 2

    image_width: int = 1920
    image_height: int = 1080
    seed: int = 0

    def __post_init__(self):
        positive = ["learning_rate", "lr_decay", "lr_decay_every", "batch_size", "motion_hidden",
                    "update_hidden", "assoc_hidden", "assoc_layers", "assoc_max_targets",
                    "assoc_max_detections", "seq_length", "max_targets", "max_detections",
                    "min_targets", "image_width", "image_height", "kalman_gate", "gate",
                    "ha2_min_length", "max_live_tracks", "log_every"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")
        non_negative = ["iterations", "rmsprop_eps", "max_grad_norm", "loss_prediction",
                        "loss_update", "loss_existence", "loss_smoothness", "clutter_episodes",
                        "assoc_embed", "assoc_pred_noise", "assoc_miss_cost", "clutter_rate",
                        "detection_noise", "kalman_q", "kalman_r", "ha2_max_misses",
                        "motion_refit_every", "motion_refit_batch", "motion_refit_ridge"]
        for name in non_negative:
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be non-negative")
        for name in ("lr_decay", "rmsprop_decay", "detection_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidArgument(f"{name} must lie in [0, 1]")
        for name in ("existence_threshold", "init_existence"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise InvalidArgument(f"{name} must lie in (0, 1)")
        if self.assoc_mode not in ("hungarian", "lstm"):
            raise InvalidArgument("assoc_mode must be 'hungarian' or 'lstm'")
        if self.hard_assignment not in ("argmax", "lap"):
            raise InvalidArgument("hard_assignment must be 'argmax' or 'lap'")
        if self.assoc_labels not in ("hungarian", "provenance"):
            raise InvalidArgument("assoc_labels must be 'hungarian' or 'provenance'")
        if self.min_targets > self.max_targets:
            raise InvalidArgument("min_targets exceeds max_targets")

    def replace(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, raw, typ, line=None):
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        raise ParseError(f"bad value {raw!r} for {key}", line) from None


def parse_overrides(pairs):
    """``["key=value", ...]`` -> typed dict, rejecting unknown keys."""
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ParseError(f"expected key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in _TYPES:
            raise ParseError(f"unknown config key {key!r}")
        out[key] = _convert(key, raw, _TYPES[key])
    return out


def load_config(path=None, overrides=()):
    values = {}
    if path is not None:
        with open(path) as fh:
            for n, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParseError("expected key = value", n)
                key, raw = (s.strip() for s in line.split("=", 1))
                if key not in _TYPES:
                    raise ParseError(f"unknown config key {key!r}", n)
                values[key] = _convert(key, raw, _TYPES[key], n)
    values.update(parse_overrides(overrides))
    return RunConfig(**values)


def dump_config(cfg, path):
    with open(path, "w") as fh:
        for key, value in cfg.as_dict().items():
            fh.write(f"{key} = {value}\n")
