#!/usr/bin/env python3
"""Timing benchmark: per-frame incremental tracking vs. re-detecting corners
and matching every reference patch, on a generated 640x480 sequence.

Example:
    python3 scripts/run_benchmark.py --tracks 200 --limit 3
"""
import argparse
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from boundarytrack import cli

BENCH_CFG = """\
synth.width = 640
synth.height = 480
synth.frames = 8
synth.seed = 2
synth.block = 16
synth.background_block = 16
synth.background = static
synth.object_w = 120
synth.object_h = 120
synth.object_levels = 20,60
synth.background_levels = 80,255
tracker.search_radius = 20
"""


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tracks", type=int, default=200)
    ap.add_argument("--limit", type=int, default=3,
                    help="number of frames to time")
    ap.add_argument("--out", default="bench.json")
    ap.add_argument("--frames",
                    help="existing frame directory (skips generation)")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "bench.cfg"
        cfg.write_text(BENCH_CFG)
        if args.frames:
            data = args.frames
        else:
            data = str(Path(tmp) / "data")
            rc = cli.main(["synth", "--config", str(cfg), "--out", data])
            if rc != 0:
                return rc
        rc = cli.main(["bench", data, "--config", str(cfg),
                       "--tracks", str(args.tracks),
                       "--limit", str(args.limit), "--out", args.out])
        if rc != 0:
            return rc

    doc = json.loads(Path(args.out).read_text())
    print(json.dumps(doc, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
