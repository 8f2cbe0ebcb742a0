import pytest

from rnntrack.config import RunConfig, dump_config, load_config, parse_overrides
from rnntrack.errors import InvalidArgument, ParseError
from rnntrack.train import learning_rate


def test_learning_rate_schedule():
    cfg = RunConfig()
    lr = [learning_rate(k, cfg.learning_rate, cfg.lr_decay, cfg.lr_decay_every)
          for k in (0, 19999, 20000, 40000)]
    assert lr[0] == 3e-4 and lr[1] == 3e-4
    assert lr[2] == pytest.approx(3e-4 * 0.95, rel=1e-15)
    assert lr[3] == pytest.approx(3e-4 * 0.95 ** 2, rel=1e-15)


def test_defaults():
    cfg = RunConfig()
    assert (cfg.batch_size, cfg.iterations, cfg.existence_threshold) == (10, 200000, 0.6)


def test_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nmotion_hidden = 32\n\ndetection_prob = 0.8  # trailing\n"
                 "motion_detach_existence = false\nassoc_mode = lstm\n")
    cfg = load_config(p, ["motion_hidden=16", "seed = 5"])
    assert cfg.motion_hidden == 16 and cfg.seed == 5
    assert cfg.detection_prob == 0.8
    assert cfg.motion_detach_existence is False
    assert cfg.assoc_mode == "lstm"


def test_dump_round_trip(tmp_path):
    cfg = RunConfig(learning_rate=1e-3, assoc_mode="lstm", seed=3)
    p = tmp_path / "out.cfg"
    dump_config(cfg, p)
    assert load_config(p) == cfg


def test_unknown_key_names_line(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("seed = 1\nhidden_size = 3\n")
    with pytest.raises(ParseError) as info:
        load_config(p)
    assert info.value.line == 2
    with pytest.raises(ParseError):
        parse_overrides(["nope=1"])


@pytest.mark.parametrize("pair", ["seed=abc", "motion_detach_existence=maybe", "seed"])
def test_bad_values(pair):
    with pytest.raises(ParseError):
        parse_overrides([pair])


@pytest.mark.parametrize("changes", [
    dict(learning_rate=0.0), dict(existence_threshold=1.0), dict(detection_prob=-0.1),
    dict(assoc_mode="greedy"), dict(min_targets=6), dict(loss_smoothness=-1.0),
])
def test_validation(changes):
    with pytest.raises(InvalidArgument):
        RunConfig(**changes)
