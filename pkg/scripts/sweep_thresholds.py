#!/usr/bin/env python3
"""Operating-point sweep: run the tracker at several corner-detector
thresholds on one synthetic sequence and report precision per setting.

Example:
    python3 scripts/sweep_thresholds.py --thresholds 1 2 4 8
"""
import argparse
import csv
import dataclasses
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from boundarytrack.evalproto import (SynthSpec, make_ground_truth,
                                     sweep_operating_points, synth_sequence)
from boundarytrack.tracker import TrackerConfig, run_sequence


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--thresholds", type=float, nargs="+",
                    default=[0.5, 1.0, 2.0, 4.0, 8.0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--out", default="sweep.csv")
    args = ap.parse_args()

    spec = SynthSpec(frames=args.frames, seed=args.seed, block=12,
                     object_levels=(20, 60), background_levels=(80, 255))
    frames, anns, _ = synth_sequence(spec)

    runs = []
    gt_rows = None
    for thr in sorted(args.thresholds):
        cfg = TrackerConfig(search_radius=20, cornerness_threshold=thr)
        rows = run_sequence(frames, cfg)
        runs.append((thr, rows))
        if gt_rows is None or thr == min(args.thresholds):
            gt_rows = rows
        print(f"threshold {thr}: {len({r.track_id for r in rows})} tracks")

    gt = make_ground_truth(gt_rows, anns)
    sweep = sweep_operating_points(runs, gt)

    with open(args.out, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["threshold", "correct", "total", "precision"])
        for s in sweep:
            wr.writerow([s.threshold, s.correct, s.total,
                         "" if s.precision is None else f"{s.precision:.6g}"])
    print(f"{'threshold':>10}{'correct':>9}{'total':>7}{'precision':>11}")
    for s in sweep:
        p = "n/a" if s.precision is None else f"{s.precision:.3f}"
        print(f"{s.threshold:>10}{s.correct:>9}{s.total:>7}{p:>11}")
    print(f"-> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
