"""Train a small motion model, then track synthetic scenes with it and with
the two Kalman baselines, and compare CLEAR MOT scores.

    python demos/track_synthetic.py --iterations 3000 --scenes 30
"""

import argparse
import time

from rnntrack.baselines import HeuristicConfig, run_kalman_ha, run_kalman_ha2
from rnntrack.config import RunConfig
from rnntrack.datagen import SceneConfig, TrajectoryModel, sample_sequence, sequence_rngs
from rnntrack.metrics import combine, evaluate, summary_line
from rnntrack.tracker import Nets, run_sequence
from rnntrack.train import train_motion


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=3000)
    parser.add_argument("--scenes", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = RunConfig(motion_hidden=64, iterations=args.iterations, learning_rate=1e-3,
                    batch_size=20, log_every=max(args.iterations // 5, 1), seed=args.seed)
    t0 = time.perf_counter()
    net, history = train_motion(cfg)
    print(f"trained motion model in {time.perf_counter() - t0:.0f}s")
    for row in history:
        print(f"  iteration {row['iteration']:6d}  loss {row['loss']:.5f}")

    trackers = {
        "rnn (exact assignment)": lambda frames: run_sequence(frames, Nets(net)).tracks,
        "kalman-ha": lambda frames: run_kalman_ha(frames, HeuristicConfig()),
        "kalman-ha2": lambda frames: run_kalman_ha2(frames, HeuristicConfig()),
    }
    results = {name: [] for name in trackers}
    for rng in sequence_rngs(args.seed + 100, args.scenes):
        scene = sample_sequence(TrajectoryModel(), SceneConfig(), rng)
        gt = scene.gt_table()
        for name, run in trackers.items():
            results[name].append(evaluate(gt, run(scene.frames)))
    print(f"\npooled over {args.scenes} held-out scenes:")
    for name, rs in results.items():
        print(f"  {name:24s} {summary_line(combine(rs))}")


if __name__ == "__main__":
    main()
