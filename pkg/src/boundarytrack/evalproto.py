"""Evaluation protocol: bounding-box ground truth, tolerance scoring with
boundary/interior stratification, operating-point sweeps, and the seeded
synthetic-sequence generator used for desk-scale experiments.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imgcore import as_gray
from .tracker import ACTIVE, TrackRow


class EvalError(Exception):
    pass


class PointOutsideBoxError(EvalError):
    pass


class ObjectOutOfFrameError(EvalError):
    pass


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, floating point allowed."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extent must be positive, got {self.w}x{self.h}")

    def contains(self, px: float, py: float, tol: float = 0.0) -> bool:
        return (self.x - tol <= px <= self.x + self.w + tol
                and self.y - tol <= py <= self.y + self.h + tol)


@dataclass(frozen=True)
class BBoxAnnotation:
    frame: int
    object_id: int
    box: Box


@dataclass(frozen=True)
class GtCorrespondence:
    track_id: int
    frame: int
    x: float
    y: float
    object_id: int


OVERALL = "overall"
BOUNDARY = "boundary"
INTERIOR = "interior"


@dataclass(frozen=True)
class PRResult:
    stratum: str
    correct: int
    total: int
    precision: float | None            # None when total == 0
    mean_correct_per_frame: float


def map_point(px: float, py: float, box_t: Box, box_u: Box) -> tuple[float, float]:
    """Carry a point across frames assuming its box-relative location is
    constant; anisotropic scaling covers resized boxes."""
    if not box_t.contains(px, py, tol=1.0):
        raise PointOutsideBoxError(f"({px}, {py}) outside {box_t}")
    return (box_u.x + (px - box_t.x) * box_u.w / box_t.w,
            box_u.y + (py - box_t.y) * box_u.h / box_t.h)


def make_ground_truth(rows: list[TrackRow],
                      annotations: list[BBoxAnnotation]) -> list[GtCorrespondence]:
    """Box-relative ground truth for every tracked point: anchor each track
    at its first row inside an annotated box, then map through that object's
    boxes.  Tracks starting outside every box get no correspondence."""
    boxes = {(a.frame, a.object_id): a.box for a in annotations}
    object_ids = sorted({a.object_id for a in annotations})
    first: dict[int, TrackRow] = {}
    for r in rows:
        if r.track_id not in first or r.frame < first[r.track_id].frame:
            first[r.track_id] = r
    gt = []
    frames = sorted({a.frame for a in annotations})
    for tid, r0 in sorted(first.items()):
        owner = None
        for oid in object_ids:
            b = boxes.get((r0.frame, oid))
            if b is not None and b.contains(r0.x, r0.y):
                owner = oid
                break
        if owner is None:
            continue
        b0 = boxes[(r0.frame, owner)]
        for f in frames:
            b = boxes.get((f, owner))
            if b is None:
                continue  # object not visible: frame excluded for this track
            x, y = map_point(r0.x, r0.y, b0, b)
            gt.append(GtCorrespondence(track_id=tid, frame=f, x=x, y=y,
                                       object_id=owner))
    return gt


def _boundary_distance(mask: np.ndarray) -> np.ndarray:
    """Distance of every pixel to the foreground boundary (foreground pixels
    4-adjacent to background or the frame border)."""
    fg = mask.astype(bool)
    eroded = ndimage.binary_erosion(fg, border_value=0)
    border = fg & ~eroded
    if not border.any():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(~border)


def score_matches(rows: list[TrackRow], gt: list[GtCorrespondence],
                  tolerance: float = 15.0,
                  masks: dict[int, np.ndarray] | None = None,
                  band: float = 5.0) -> dict[str, PRResult]:
    """Precision of tracked positions against ground truth.

    A prediction is correct when its Euclidean distance to the expected
    position is <= tolerance (closed comparison).  Each track's first row is
    its detection, not a match, and is not scored; rows after a track is
    lost contribute nothing.  Predictions with no correspondence count in
    the total (they are obtained matches that cannot be verified correct).
    """
    gt_map = {(g.track_id, g.frame): g for g in gt}
    first_frame: dict[int, int] = {}
    for r in rows:
        f = first_frame.get(r.track_id)
        if f is None or r.frame < f:
            first_frame[r.track_id] = r.frame

    dist_fields: dict[int, np.ndarray] = {}
    if masks:
        dist_fields = {f: _boundary_distance(m) for f, m in masks.items()}

    counts = {s: [0, 0] for s in (OVERALL, BOUNDARY, INTERIOR)}
    frames_seen = set()
    for r in rows:
        if r.status != ACTIVE or r.frame == first_frame[r.track_id]:
            continue
        frames_seen.add(r.frame)
        g = gt_map.get((r.track_id, r.frame))
        if g is None:
            correct = False
            stratum = None
        else:
            correct = np.hypot(r.x - g.x, r.y - g.y) <= tolerance
            stratum = None
            if r.frame in dist_fields:
                fld = dist_fields[r.frame]
                gx = min(max(int(round(g.x)), 0), fld.shape[1] - 1)
                gy = min(max(int(round(g.y)), 0), fld.shape[0] - 1)
                stratum = BOUNDARY if fld[gy, gx] <= band else INTERIOR
        for s in (OVERALL, stratum):
            if s is None:
                continue
            counts[s][1] += 1
            if correct:
                counts[s][0] += 1

    n_frames = max(len(frames_seen), 1)
    out = {}
    for s, (c, t) in counts.items():
        out[s] = PRResult(stratum=s, correct=c, total=t,
                          precision=(c / t) if t else None,
                          mean_correct_per_frame=c / n_frames)
    return out


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    correct: int
    total: int
    precision: float | None


def sweep_operating_points(runs: list[tuple[float, list[TrackRow]]],
                           gt: list[GtCorrespondence],
                           tolerance: float = 15.0) -> list[SweepRow]:
    """One precision row per detector-threshold setting."""
    if len(runs) < 2:
        raise EvalError("a sweep needs at least two threshold settings")
    out = []
    for threshold, rows in runs:
        r = score_matches(rows, gt, tolerance)[OVERALL]
        out.append(SweepRow(threshold=threshold, correct=r.correct,
                            total=r.total, precision=r.precision))
    return out


# ---------------------------------------------------------------------------
# Synthetic sequences

BG_STATIC = "static"
BG_RERANDOMIZE = "rerandomize"


@dataclass(frozen=True)
class SynthSpec:
    width: int = 320
    height: int = 240
    frames: int = 30
    object_w: int = 60
    object_h: int = 60
    object_x0: int = 30
    object_y0: int = 30
    step_dx: int = 2
    step_dy: int = 0
    background: str = BG_RERANDOMIZE
    seed: int = 0
    block: int = 6                     # object texture cell size, px
    background_block: int = 1          # 1 = per-pixel noise
    object_levels: tuple[int, int] = (20, 100)
    background_levels: tuple[int, int] = (150, 255)


def _block_noise(rng, h: int, w: int, block: int, lo: int, hi: int) -> np.ndarray:
    cells = rng.integers(lo, hi + 1,
                         size=(-(-h // block), -(-w // block)), dtype=np.int64)
    return np.kron(cells, np.ones((block, block), dtype=np.int64))[:h, :w] \
        .astype(np.uint8)


def synth_sequence(spec: SynthSpec):
    """Deterministic textured object translating over a textured background.

    Returns (frames, annotations, masks): uint8 frames, one BBoxAnnotation
    per frame (object_id 1), and exact boolean foreground masks.
    """
    rng = np.random.default_rng(spec.seed)
    obj = _block_noise(rng, spec.object_h, spec.object_w, spec.block,
                       *spec.object_levels)
    static_bg = _block_noise(rng, spec.height, spec.width,
                             spec.background_block, *spec.background_levels)
    frames, annotations, masks = [], [], []
    for k in range(spec.frames):
        ox = spec.object_x0 + k * spec.step_dx
        oy = spec.object_y0 + k * spec.step_dy
        if ox < 0 or oy < 0 or ox + spec.object_w > spec.width \
                or oy + spec.object_h > spec.height:
            raise ObjectOutOfFrameError(f"object leaves the frame at step {k}")
        if spec.background == BG_RERANDOMIZE:
            bg = _block_noise(rng, spec.height, spec.width,
                              spec.background_block, *spec.background_levels)
        else:
            bg = static_bg
        frame = bg.copy()
        frame[oy:oy + spec.object_h, ox:ox + spec.object_w] = obj
        mask = np.zeros((spec.height, spec.width), dtype=bool)
        mask[oy:oy + spec.object_h, ox:ox + spec.object_w] = True
        frames.append(frame)
        masks.append(mask)
        annotations.append(BBoxAnnotation(
            frame=k, object_id=1,
            box=Box(float(ox), float(oy), float(spec.object_w),
                    float(spec.object_h))))
    return frames, annotations, masks


# ---------------------------------------------------------------------------
# File formats

def load_annotations(path) -> list[BBoxAnnotation]:
    """CSV `frame,object_id,left,top,width,height`; a header row and extra
    trailing columns (plain MOT exports) are tolerated."""
    out = []
    with open(path, newline="") as f:
        for rec in csv.reader(f):
            if not rec or not rec[0].strip() or not rec[0].strip().lstrip("-").isdigit():
                continue  # header or blank
            frame, oid = int(rec[0]), int(rec[1])
            left, top, w, h = (float(v) for v in rec[2:6])
            out.append(BBoxAnnotation(frame=frame, object_id=oid,
                                      box=Box(left, top, w, h)))
    return out


def save_annotations(path, annotations: list[BBoxAnnotation]) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["frame", "object_id", "left", "top", "width", "height"])
        for a in annotations:
            wr.writerow([a.frame, a.object_id,
                         f"{a.box.x:.6g}", f"{a.box.y:.6g}",
                         f"{a.box.w:.6g}", f"{a.box.h:.6g}"])


def save_results(path, results: list[tuple[str, float, PRResult]]) -> None:
    """Rows of (stratum, threshold, result)."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["stratum", "threshold", "correct_per_frame", "precision"])
        for stratum, threshold, r in results:
            wr.writerow([stratum, f"{threshold:.6g}",
                         f"{r.mean_correct_per_frame:.6g}",
                         "" if r.precision is None else f"{r.precision:.6g}"])


def mask_from_pgm(img: np.ndarray) -> np.ndarray:
    return as_gray(img) >= 128
