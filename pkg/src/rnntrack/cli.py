"""Command-line driver: generate data, train, track, evaluate, check, bench."""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .association import AssocNet
from .baselines import HeuristicConfig, run_kalman_ha, run_kalman_ha2
from .config import dump_config, load_config
from .datagen import TrajectoryModel, sequence_rngs, sample_sequence
from .errors import TrackingError
from .gradcheck import TOLERANCE, run_suite
from .io import (read_detections, read_tracks, write_existence_csv, write_mot_csv,
                 write_scene)
from .metrics import evaluate, summary_line, write_summary
from .motion import MotionNet
from .train import scene_config, train_assoc, train_motion, write_history
from .tracker import Nets, TrackerConfig, run_sequence

log = logging.getLogger("rnntrack")


def _config(args, **forced):
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(args.config, overrides)
    return cfg.replace(**forced) if forced else cfg


def _add_config_args(p, seed=True):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config value (repeatable)")
    if seed:
        p.add_argument("--seed", type=int, help="master random seed")


def cmd_gen_data(args):
    cfg = _config(args)
    scfg = scene_config(cfg)
    os.makedirs(args.out, exist_ok=True)
    for k, rng in enumerate(sequence_rngs(cfg.seed, args.sequences)):
        scene = sample_sequence(TrajectoryModel(), scfg, rng)
        scene.image_size = (cfg.image_width, cfg.image_height)
        stem = os.path.join(args.out, f"seq{k:04d}")
        write_scene(scene, f"{stem}-gt.csv", f"{stem}-det.csv", f"{stem}-prov.csv")
    print(f"wrote {args.sequences} sequences to {args.out}")
    return 0


def _train(args, trainer):
    cfg = _config(args)
    if args.iterations is not None:
        cfg = cfg.replace(iterations=args.iterations)
    net, history = trainer(cfg)
    net.save(args.out, cfg.iterations)
    if args.history:
        write_history(history, args.history)
    if args.dump_config:
        dump_config(cfg, args.dump_config)
    last = history[-1]["loss"] if history else float("nan")
    print(f"saved {args.out} after {cfg.iterations} iterations, final loss {last:.6g}")
    return 0


def cmd_train_motion(args):
    return _train(args, train_motion)


def cmd_train_assoc(args):
    return _train(args, train_assoc)


def cmd_track(args):
    cfg = _config(args)
    W, H = cfg.image_width, cfg.image_height
    assoc = AssocNet.load(args.assoc) if args.assoc and args.method == "rnn" else None
    # the association net has a fixed column count; keep the most confident boxes
    cap = assoc.max_detections if assoc is not None else None
    frames = read_detections(args.det, W, H, max_detections=cap, n_frames=args.frames)
    if args.method in ("kalman-ha", "kalman-ha2"):
        run = run_kalman_ha if args.method == "kalman-ha" else run_kalman_ha2
        table = run(frames, HeuristicConfig.from_run_config(cfg))
        log_rows = None
    else:
        if args.model is None:
            raise _UsageError("track: --model is required for the recurrent tracker")
        mode = "lstm" if assoc is not None else "hungarian"
        nets = Nets(MotionNet.load(args.model), assoc)
        result = run_sequence(frames, nets, TrackerConfig.from_run_config(cfg, assoc_mode=mode))
        table, log_rows = result.tracks, result.existence_log
    write_mot_csv(args.out, table, W, H)
    if args.existence_out and log_rows is not None:
        write_existence_csv(args.existence_out, log_rows)
    print(f"wrote {len(table)} boxes for {len(table.track_ids())} tracks to {args.out}")
    return 0


def cmd_eval(args):
    W, H = args.image_size
    result = evaluate(read_tracks(args.gt, W, H), read_tracks(args.res, W, H), args.threshold)
    if args.out:
        write_summary(result, args.out, args.name)
    print(summary_line(result))
    return 0


def cmd_gradcheck(args):
    errors = run_suite(args.seed, args.instances)
    ok = True
    for name, err in errors.items():
        passed = err < TOLERANCE
        ok &= passed
        print(f"{name:12s} max relative error {err:.3e} {'PASS' if passed else 'FAIL'}")
    return 0 if ok else 1


def bench_frames(n_targets, n_frames, max_detections, rng):
    """Frames with ``n_targets`` constant-velocity targets always detected."""
    from .scene import MeasurementFrame

    x0 = rng.uniform(-0.3, 0.3, (n_targets, 4))
    v = rng.normal(0, 0.002, (n_targets, 4))
    m = max(max_detections, n_targets)
    return [MeasurementFrame.from_boxes(x0 + t * v + rng.normal(0, 0.002, x0.shape), m)
            for t in range(n_frames)]


def cmd_bench(args):
    from threadpoolctl import threadpool_limits

    cfg = _config(args)
    rng = np.random.default_rng(cfg.seed)
    if args.model:
        motion = MotionNet.load(args.model)
    else:
        motion = MotionNet(cfg.motion_hidden, cfg.update_hidden, rng)
    frames = bench_frames(args.targets, args.frames, cfg.max_detections, rng)
    tcfg = TrackerConfig.from_run_config(cfg, existence_threshold=0.01)
    with threadpool_limits(limits=1):
        result = run_sequence(frames, Nets(motion), tcfg)
    live = len(result.existence_log) / max(args.frames, 1)
    print(f"frames={args.frames} targets={args.targets} live={live:.1f} fps={result.fps:.1f}")
    return 0


class _UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(prog="rnntrack", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample synthetic scenes to MOT CSV files")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sequences", type=int, default=10)
    p.set_defaults(func=cmd_gen_data)

    for name, func in (("train-motion", cmd_train_motion), ("train-assoc", cmd_train_assoc)):
        p = sub.add_parser(name, help=f"{name.split('-')[1]} network training")
        _add_config_args(p)
        p.add_argument("--out", required=True, help="checkpoint path")
        p.add_argument("--iterations", type=int)
        p.add_argument("--history", help="training-curve CSV")
        p.add_argument("--dump-config", help="write the effective config here")
        p.set_defaults(func=func)

    p = sub.add_parser("track", help="run a tracker over a detection file")
    _add_config_args(p)
    p.add_argument("--det", required=True, help="detection CSV")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--model", help="motion checkpoint")
    p.add_argument("--assoc", help="association checkpoint (switches to learned association)")
    p.add_argument("--method", choices=["rnn", "kalman-ha", "kalman-ha2"], default="rnn")
    p.add_argument("--frames", type=int, help="sequence length (default: last detection frame)")
    p.add_argument("--existence-out", help="per-frame existence CSV")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="CLEAR MOT metrics of a results file")
    p.add_argument("--gt", required=True)
    p.add_argument("--res", required=True)
    p.add_argument("--out", help="summary CSV")
    p.add_argument("--name", help="row label in the summary CSV")
    p.add_argument("--threshold", type=float, default=0.5, help="IoU match threshold")
    p.add_argument("--image-size", type=int, nargs=2, default=(1920, 1080), metavar=("W", "H"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=50)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="tracker throughput on one thread")
    _add_config_args(p)
    p.add_argument("--model", help="motion checkpoint (default: freshly initialised)")
    p.add_argument("--targets", type=int, default=20)
    p.add_argument("--frames", type=int, default=200)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (TrackingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
