"""Show how track existence rises after a target appears and decays after
its detections stop, and write the curves as CSV for external plotting.

    python demos/existence_curves.py --out existence.csv
"""

import argparse
from collections import Counter, defaultdict

from rnntrack.config import RunConfig
from rnntrack.datagen import SceneConfig, sample_sequence
from rnntrack.io import write_existence_csv
from rnntrack.tracker import Nets, run_sequence
from rnntrack.train import train_motion


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=3000)
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--out", help="existence CSV (frame, id, existence, source)")
    args = parser.parse_args()

    cfg = RunConfig(motion_hidden=64, iterations=args.iterations, learning_rate=1e-3,
                    batch_size=20, log_every=args.iterations, seed=0)
    net, _ = train_motion(cfg)
    scene = sample_sequence(cfg=SceneConfig(min_targets=5, max_targets=5, seed=args.seed))
    run = run_sequence(scene.frames, Nets(net))

    print("ground truth lifetimes (frames, 1-based):")
    for tr in scene.gt_tracks:
        print(f"  target {tr.id}: {tr.birth + 1}..{tr.death + 1}")

    curves, fed_by = defaultdict(dict), defaultdict(Counter)
    for frame, tid, e, src in run.existence_log:
        curves[tid][frame] = e
        if src >= 0:
            fed_by[tid][src] += 1
    print("\nexistence per track ('.' = not alive, '#' = at or above 0.6):")
    for tid, curve in sorted(curves.items()):
        if max(curve.values()) < 0.6:
            continue
        cells = "".join("." if f not in curve else "#" if curve[f] >= 0.6 else "-"
                        for f in range(1, scene.n_frames + 1))
        target = fed_by[tid].most_common(1)[0][0] if fed_by[tid] else "clutter"
        print(f"  track {tid:3d}  {cells}  mostly fed by target {target}")
    if args.out:
        write_existence_csv(args.out, run.existence_log)
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
