"""Command-line front end for the boundary point tracker.

Subcommands: ``detect`` (corners of one image), ``track`` (two-phase tracker
over a frame sequence), ``klt`` (baseline tracker, same log format),
``synth`` (seeded synthetic dataset), ``eval`` (stratified precision
scoring), ``bench`` (per-frame tracking vs. re-detect-and-match timing).

Every run writes a JSON manifest next to its primary output recording the
command, the full configuration snapshot, input and output paths, seed,
package version, and per-stage wall-clock timings.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, corners, evalproto, kltbase, partssd, tracker
from .config import Config, ConfigError, load_config, snapshot
from .imgcore import ImageError, load_image, save_pgm

FRAME_SUFFIXES = (".pgm", ".png", ".ppm")


class CliError(Exception):
    """Runtime failure reported with exit code 1."""


# ---------------------------------------------------------------------------
# Shared plumbing

def frame_paths(src) -> list[Path]:
    """Frame files from a directory (byte-wise sorted, locale-independent)
    or an explicit list file (one path per line, relative to the file)."""
    p = Path(src)
    if p.is_dir():
        files = [c for c in p.iterdir()
                 if c.is_file() and c.suffix.lower() in FRAME_SUFFIXES]
        files.sort(key=lambda c: c.name.encode())
        if not files:
            raise CliError(f"{src}: no frame files "
                           f"({'/'.join(FRAME_SUFFIXES)}) in directory")
        return files
    if p.is_file():
        out = []
        for line in p.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            q = Path(line)
            out.append(q if q.is_absolute() else p.parent / q)
        if not out:
            raise CliError(f"{src}: empty frame list")
        return out
    raise CliError(f"{src}: no such file or directory")


def _load_frame(path) -> np.ndarray:
    try:
        return load_image(path)
    except (ImageError, OSError) as exc:
        raise CliError(f"cannot read frame {path}: {exc}") from None


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else \
        out.with_name(out.name + ".manifest.json")


def write_manifest(out: Path, command: str, cfg: Config, inputs, outputs,
                   seed, timings: dict) -> Path:
    path = _manifest_path(out)
    doc = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": snapshot(cfg),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs] + [str(path)],
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _effective_tracker_cfg(cfg: Config, args) -> "tracker.TrackerConfig":
    tcfg = cfg.tracker
    if args.jobs is not None:
        tcfg = dataclasses.replace(tcfg, jobs=args.jobs)
    return tcfg


# ---------------------------------------------------------------------------
# Subcommands

def cmd_detect(args, cfg: Config) -> int:
    img = _load_frame(args.image)
    t0 = time.perf_counter()
    pts = corners.detect_corners(img, cfg.detect)
    detect_s = time.perf_counter() - t0
    out = Path(args.out or "corners.csv")
    with open(out, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["corner_id", "x", "y", "level", "stability", "cornerness"])
        for i, c in enumerate(pts):
            wr.writerow([i, c.x, c.y, c.segment.level,
                         f"{c.segment.stability:.6g}", f"{c.cornerness:.6g}"])
    outputs = [out]
    if args.dump_msers:
        h, w = img.shape
        max_area = max(1, int(cfg.detect.mser_max_area_frac * h * w))
        segments = corners.stable_segments(
            img, cfg.detect.mser_delta, cfg.detect.mser_max_variation,
            cfg.detect.mser_min_area, max_area)
        dump = Path(args.dump_msers)
        with open(dump, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["region_id", "point_index", "x", "y"])
            for rid, seg in enumerate(segments):
                for k, (x, y) in enumerate(seg.contour.points):
                    wr.writerow([rid, k, int(x), int(y)])
        outputs.append(dump)
    write_manifest(out, "detect", cfg, [args.image], outputs, args.seed,
                   {"detect_s": detect_s})
    print(f"detect: {len(pts)} corners -> {out}")
    return 0


def cmd_track(args, cfg: Config) -> int:
    tcfg = _effective_tracker_cfg(cfg, args)
    paths = frame_paths(args.frames)
    out = Path(args.out or "tracks.csv")

    timings = {"mser_precompute_s": 0.0, "chamfer_s": 0.0, "ssd_s": 0.0}
    dump_rows: list[list] = []

    def observer(result: tracker.FrameResult) -> None:
        timings["mser_precompute_s"] += result.precompute_s
        for o in result.outcomes:
            timings["chamfer_s"] += o.shortlist_s
            timings["ssd_s"] += o.verify_s
            if args.dump_chamfer:
                for k, e in enumerate(o.entries):
                    dump_rows.append([result.frame, o.track_id, k,
                                      e.x, e.y, f"{e.chamfer_score:.6g}"])

    rows = tracker.run_sequence((_load_frame(p) for p in paths), tcfg,
                                observer=observer)
    tracker.write_tracklog(out, rows)
    outputs = [out]
    if args.dump_chamfer:
        dump = Path(args.dump_chamfer)
        with open(dump, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["frame", "track_id", "candidate", "x", "y",
                         "chamfer_score"])
            wr.writerows(dump_rows)
        outputs.append(dump)
    write_manifest(out, "track", cfg, paths, outputs, args.seed, timings)
    n_tracks = len({r.track_id for r in rows})
    print(f"track: {n_tracks} tracks over {len(paths)} frames -> {out}")
    return 0


def cmd_klt(args, cfg: Config) -> int:
    paths = frame_paths(args.frames)
    out = Path(args.out or "klt_tracks.csv")
    first = _load_frame(paths[0])
    t0 = time.perf_counter()
    pts = corners.detect_corners(first, cfg.detect)
    detect_s = time.perf_counter() - t0

    def frames():
        yield first
        for p in paths[1:]:
            yield _load_frame(p)

    t0 = time.perf_counter()
    rows = kltbase.klt_sequence(frames(), [(c.x, c.y) for c in pts],
                                cfg.klt)
    klt_s = time.perf_counter() - t0
    tracker.write_tracklog(out, rows)
    write_manifest(out, "klt", cfg, paths, [out], args.seed,
                   {"detect_s": detect_s, "klt_s": klt_s})
    print(f"klt: {len(pts)} points over {len(paths)} frames -> {out}")
    return 0


def cmd_synth(args, cfg: Config) -> int:
    spec = cfg.synth
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    outdir = Path(args.out or "synth_out")
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "masks").mkdir(exist_ok=True)
    t0 = time.perf_counter()
    frames, annotations, masks = evalproto.synth_sequence(spec)
    synth_s = time.perf_counter() - t0
    outputs = []
    for k, (frame, mask) in enumerate(zip(frames, masks)):
        fp = outdir / f"frame_{k:03d}.pgm"
        mp = outdir / "masks" / f"mask_{k:03d}.pgm"
        save_pgm(fp, frame)
        save_pgm(mp, mask.astype("uint8") * 255)
        outputs.extend([fp, mp])
    ap = outdir / "annotations.csv"
    evalproto.save_annotations(ap, annotations)
    outputs.append(ap)
    write_manifest(outdir, "synth", dataclasses.replace(cfg, synth=spec),
                   [], outputs, spec.seed, {"synth_s": synth_s})
    print(f"synth: {len(frames)} frames -> {outdir}")
    return 0


def _load_masks(mask_dir) -> dict[int, np.ndarray]:
    """PGM masks keyed by the frame index embedded in each file name."""
    import re

    masks = {}
    for p in frame_paths(mask_dir):
        m = re.search(r"(\d+)", p.stem)
        if m is None:
            raise CliError(f"mask file {p.name} has no frame number")
        masks[int(m.group(1))] = evalproto.mask_from_pgm(_load_frame(p))
    return masks


def cmd_eval(args, cfg: Config) -> int:
    out = Path(args.out or "results.csv")
    rows = tracker.read_tracklog(args.tracklog)
    annotations = evalproto.load_annotations(args.annotations)
    if not annotations:
        raise CliError(f"{args.annotations}: no annotation rows")
    masks = _load_masks(args.masks) if args.masks else None
    t0 = time.perf_counter()
    gt = evalproto.make_ground_truth(rows, annotations)
    results = evalproto.score_matches(rows, gt, cfg.eval.tolerance,
                                      masks, cfg.eval.band)
    eval_s = time.perf_counter() - t0
    threshold = cfg.detect.cornerness_threshold
    strata = [evalproto.OVERALL, evalproto.BOUNDARY, evalproto.INTERIOR]
    evalproto.save_results(out, [(s, threshold, results[s]) for s in strata])
    inputs = [args.tracklog, args.annotations] + \
        ([args.masks] if args.masks else [])
    outputs = [out]
    if args.plot_data:
        pd = Path(args.plot_data)
        with open(pd, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["precision", "correct", "stratum"])
            for s in strata:
                r = results[s]
                if r.precision is not None:
                    wr.writerow([f"{r.precision:.6g}", r.correct, s])
        outputs.append(pd)
    write_manifest(out, "eval", cfg, inputs, outputs, args.seed,
                   {"eval_s": eval_s})
    ov = results[evalproto.OVERALL]
    prec = "n/a" if ov.precision is None else f"{ov.precision:.3f}"
    print(f"eval: overall precision {prec} "
          f"({ov.correct}/{ov.total}) -> {out}")
    return 0


def cmd_bench(args, cfg: Config) -> int:
    tcfg = _effective_tracker_cfg(cfg, args)
    paths = frame_paths(args.frames)
    if args.limit is not None:
        paths = paths[:args.limit]
    if len(paths) < 2:
        raise CliError("bench needs at least 2 frames")
    out = Path(args.out or "bench.json")
    images = [_load_frame(p) for p in paths]

    params = tcfg.detect_params()
    pts = corners.detect_corners(images[0], params)
    if args.tracks is not None:
        pts = pts[:args.tracks]
    if not pts:
        raise CliError("no corners detected on the first frame")

    # Pipeline A: incremental tracking (window precompute + chamfer + SSD).
    tracks = [tracker.track_from_corner(i, c, images[0], tcfg, 0)
              for i, c in enumerate(pts)]
    refs = [t.patch for t in tracks]   # frame-0 patches, before re-anchoring
    step_ms = []
    for idx, frame in enumerate(images[1:], start=1):
        t0 = time.perf_counter()
        tracker.step(tracks, frame, idx, tcfg)
        step_ms.append(1000.0 * (time.perf_counter() - t0))

    # Pipeline B: re-detect every frame, then match every reference patch
    # against every detection by part-SSD.
    detect_match_ms = []
    for frame in images[1:]:
        t0 = time.perf_counter()
        dets = corners.detect_corners(frame, params)
        cand_patches = [partssd.extract_support_patch(
            frame, c.x, c.y, tcfg.patch_size, c.side_a, c.side_b,
            c.valid, c.patch_rect, c.degenerate) for c in dets]
        for ref in refs:
            best = None
            for q in cand_patches:
                try:
                    r = partssd.part_ssd_match(ref, q, tcfg.min_overlap)
                except partssd.PartSsdError:
                    continue
                if best is None or r.score < best.score:
                    best = r
        detect_match_ms.append(1000.0 * (time.perf_counter() - t0))

    med_step = statistics.median(step_ms)
    med_dm = statistics.median(detect_match_ms)
    report = {
        "frames": len(images),
        "tracks": len(pts),
        "median_step_ms": round(med_step, 3),
        "median_detect_match_ms": round(med_dm, 3),
        "ratio": round(med_step / med_dm, 6),
        "step_ms": [round(v, 3) for v in step_ms],
        "detect_match_ms": [round(v, 3) for v in detect_match_ms],
    }
    with open(out, "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    write_manifest(out, "bench", cfg, paths, [out], args.seed,
                   {"step_total_s": sum(step_ms) / 1000.0,
                    "detect_match_total_s": sum(detect_match_ms) / 1000.0})
    print(f"bench: {len(pts)} tracks, median step {med_step:.1f} ms, "
          f"detect+match {med_dm:.1f} ms, ratio {med_step / med_dm:.3f}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--jobs", type=int, help="worker threads for tracking")
    common.add_argument("--seed", type=int,
                        help="seed override (synth) / recorded in the manifest")
    common.add_argument("--out", help="primary output path")

    p = argparse.ArgumentParser(
        prog="boundarytrack",
        description="Boundary-aware point tracking on stable level lines.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", parents=[common],
                       help="detect boundary corners in one image")
    d.add_argument("image")
    d.add_argument("--dump-msers", help="also write stable contours as CSV")
    d.set_defaults(func=cmd_detect)

    t = sub.add_parser("track", parents=[common],
                       help="run the two-phase tracker over a sequence")
    t.add_argument("frames", help="frame directory or list file")
    t.add_argument("--dump-chamfer",
                   help="also write per-candidate chamfer scores as CSV")
    t.set_defaults(func=cmd_track)

    k = sub.add_parser("klt", parents=[common],
                       help="run the KLT baseline over a sequence")
    k.add_argument("frames", help="frame directory or list file")
    k.set_defaults(func=cmd_klt)

    s = sub.add_parser("synth", parents=[common],
                       help="generate a seeded synthetic sequence")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", parents=[common],
                       help="score a tracklog against box annotations")
    e.add_argument("tracklog")
    e.add_argument("--annotations", required=True,
                   help="CSV frame,object_id,left,top,width,height")
    e.add_argument("--masks", help="directory of per-frame PGM masks")
    e.add_argument("--plot-data", help="also write precision/correct CSV")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", parents=[common],
                       help="time tracking vs. re-detect-and-match")
    b.add_argument("frames", help="frame directory or list file")
    b.add_argument("--tracks", type=int, default=200,
                   help="number of frame-0 tracks to time (default 200)")
    b.add_argument("--limit", type=int, help="use only the first N frames")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"boundarytrack: config error: {exc}", file=sys.stderr)
        return 2
    except CliError as exc:
        print(f"boundarytrack: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # stable exit-code contract: runtime failure
        print(f"boundarytrack: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
