"""Train the association LSTM on synthetic cost matrices and compare its
soft assignments with the exact optimum on a few held-out frames.

    python demos/learned_association.py --iterations 5000
"""

import argparse

import numpy as np

from rnntrack.assignment import MISS, solve_lap
from rnntrack.association import agreement, assoc_forward, assoc_instances
from rnntrack.config import RunConfig
from rnntrack.datagen import TrajectoryModel, sample_sequence, sequence_rngs
from rnntrack.train import scene_config, train_assoc


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=5000)
    parser.add_argument("--show", type=int, default=3)
    args = parser.parse_args()

    cfg = RunConfig(assoc_max_targets=3, assoc_max_detections=5, max_targets=3, max_detections=5,
                    assoc_hidden=64, iterations=args.iterations, learning_rate=1e-3,
                    lr_decay=0.7, lr_decay_every=5000, batch_size=20,
                    log_every=max(args.iterations // 5, 1), seed=0)
    net, history = train_assoc(cfg)
    for row in history:
        print(f"iteration {row['iteration']:6d}  loss {row['loss']:.4f}")

    held_out = []
    for rng in sequence_rngs(999, 50):
        scene = sample_sequence(TrajectoryModel(), scene_config(cfg), rng)
        held_out += assoc_instances(scene, rng, cfg.assoc_max_targets, cfg.assoc_pred_noise,
                                    cfg.assoc_miss_cost)
    print(f"\nrow agreement with the exact labels: {agreement(net, held_out):.3f}")

    np.set_printoptions(precision=2, suppress=True)
    for c, _ in held_out[:args.show]:
        a = assoc_forward(net, c)
        exact = solve_lap(c, cfg.assoc_miss_cost).cols
        print("\ndistances (rows: tracks, cols: detections)\n", c)
        print("soft assignment (last column: miss)\n", a.probs)
        print("exact assignment:", ["miss" if j == MISS else j for j in exact])


if __name__ == "__main__":
    main()
