"""Two-phase boundary point tracker.

Per frame: stable level-line boundaries are precomputed once in a grid of
overlapping windows, each live track shortlists candidate boundaries by
hierarchical chamfer matching of its level-line arc, and the shortlist is
verified by part-SSD matching of the support-region sides.  Verified matches
re-anchor the track; anything else counts as a miss.
"""
from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import chamfer, corners, mser, partssd
from .imgcore import Rect, as_gray


class TrackerError(Exception):
    pass


class FrameOrderError(TrackerError):
    pass


class EmptySequenceError(TrackerError):
    pass


ACTIVE = "active"
LOST = "lost"


@dataclass(frozen=True)
class TrackerConfig:
    search_radius: int = 40            # enlarge for low frame rates
    patch_size: int = 41
    scale: float = 8.4
    chamfer_accept: float = 2.0        # px average boundary distance
    ssd_threshold: float = 300.0       # intensity^2
    min_overlap: int = 40
    min_side_pixels: int = 40
    mser_delta: int = 10
    max_variation_detect: float = 0.25
    max_variation_track: float = 0.5   # relaxed: we search for known corners
    mser_min_area: int = 25
    mser_max_area_frac: float = 0.5
    cornerness_threshold: float = 2.0
    min_contour_points: int = 17
    tile_size: int = 160
    tile_stride: int = 80
    redetect_interval: int = 0         # 0 = never spawn new tracks
    min_spawn_dist: float = 10.0
    max_misses: int = 1
    top_k: int = 5
    arc_radius_factor: float = 2.0     # template arc = +/- factor*scale points
    jobs: int = 1

    def __post_init__(self):
        window = 2 * self.search_radius + 1
        if self.search_radius < self.patch_size // 2:
            raise ValueError("search_radius must cover the patch half-width")
        if self.tile_stride > self.tile_size - window + 1:
            raise ValueError(
                f"tile stride {self.tile_stride} too large: a {window}px "
                f"search window must always fit one {self.tile_size}px tile")

    def detect_params(self, tracking_mode: bool = False) -> corners.DetectParams:
        return corners.DetectParams(
            scale=self.scale,
            cornerness_threshold=self.cornerness_threshold,
            patch_size=self.patch_size,
            min_side_pixels=self.min_side_pixels,
            min_contour_points=self.min_contour_points,
            mser_delta=self.mser_delta,
            mser_max_variation=(self.max_variation_track if tracking_mode
                                else self.max_variation_detect),
            mser_min_area=self.mser_min_area,
            mser_max_area_frac=self.mser_max_area_frac)

    @property
    def arc_radius(self) -> int:
        return int(self.arc_radius_factor * self.scale)


@dataclass
class HistoryEntry:
    frame: int
    x: int
    y: int
    chamfer_score: float | None
    ssd_score: float | None
    combination: str | None


@dataclass
class Track:
    id: int
    x: int
    y: int
    arc_points: np.ndarray             # (n, 2) absolute level-line arc
    patch: partssd.SupportPatch
    status: str = ACTIVE
    misses: int = 0
    history: list[HistoryEntry] = field(default_factory=list)

    @property
    def position(self) -> tuple[int, int]:
        return (self.x, self.y)


# ---------------------------------------------------------------------------
# Precomputed MSER windows

@dataclass
class CandidateContour:
    points: np.ndarray                 # (n, 2) frame coordinates
    region_pixels: np.ndarray          # (m, 2) frame coordinates
    level: int
    stability: float
    polarity: str
    bbox: Rect


@dataclass
class Tile:
    rect: Rect
    contours: list[CandidateContour]
    _pyramids: dict[int, chamfer.EdgePyramid] = field(default_factory=dict)
    _stack: chamfer.EdgePyramidStack | None = None

    def pyramid(self, idx: int, num_levels: int) -> chamfer.EdgePyramid:
        if idx not in self._pyramids:
            c = self.contours[idx]
            local = c.points - np.array([self.rect.x0, self.rect.y0])
            self._pyramids[idx] = chamfer.build_edge_pyramid(
                local, (self.rect.w, self.rect.h), num_levels)
        return self._pyramids[idx]

    def stack(self, num_levels: int) -> chamfer.EdgePyramidStack:
        """Joint pyramid stack over every contour; levels are shared by all
        tracks searching this tile."""
        if self._stack is None:
            self._stack = chamfer.EdgePyramidStack(
                [self.pyramid(i, num_levels) for i in range(len(self.contours))])
        return self._stack


@dataclass
class MserWindowCache:
    tiles: list[Tile]
    grid_shape: tuple[int, int]        # (rows, cols)
    frame_shape: tuple[int, int]       # (h, w)


def tile_grid(width: int, height: int, size: int, stride: int) -> list[Rect]:
    """Overlapping tile rects covering the frame, row-major."""
    def starts(extent):
        if extent <= size:
            return [0]
        xs = list(range(0, extent - size + 1, stride))
        if xs[-1] != extent - size:
            xs.append(extent - size)
        return xs
    return [Rect(x, y, min(size, width), min(size, height))
            for y in starts(height) for x in starts(width)]


def precompute_mser_windows(frame: np.ndarray, cfg: TrackerConfig) -> MserWindowCache:
    """Tracking-mode MSER boundaries for every tile, both polarities."""
    frame = as_gray(frame)
    h, w = frame.shape
    rects = tile_grid(w, h, cfg.tile_size, cfg.tile_stride)
    n_cols = len({r.x0 for r in rects})
    tiles = []
    for rect in rects:
        window = frame[rect.y0:rect.y1, rect.x0:rect.x1]
        max_area = max(1, int(cfg.mser_max_area_frac * rect.w * rect.h))
        contours = []
        off = np.array([rect.x0, rect.y0])
        for polarity in mser.POLARITIES:
            tree = mser.build_component_tree(window, polarity)
            for region in mser.extract_msers(tree, cfg.mser_delta,
                                             cfg.max_variation_track,
                                             cfg.mser_min_area, max_area):
                contour = mser.trace_boundary(region)
                pts = contour.points + off
                contours.append(CandidateContour(
                    points=pts, region_pixels=region.pixels + off,
                    level=region.level, stability=region.stability,
                    polarity=polarity,
                    bbox=Rect(int(pts[:, 0].min()), int(pts[:, 1].min()),
                              int(pts[:, 0].max() - pts[:, 0].min()) + 1,
                              int(pts[:, 1].max() - pts[:, 1].min()) + 1)))
        tiles.append(Tile(rect=rect, contours=contours))
    return MserWindowCache(tiles=tiles, grid_shape=(len(rects) // n_cols, n_cols),
                           frame_shape=(h, w))


def _select_tile(cache: MserWindowCache, search: Rect) -> int:
    scx, scy = search.center
    best, best_d = 0, float("inf")
    for i, tile in enumerate(cache.tiles):
        tcx, tcy = tile.rect.center
        d = (tcx - scx) ** 2 + (tcy - scy) ** 2
        if d < best_d:
            best, best_d = i, d
    return best


@dataclass(frozen=True)
class ShortlistEntry:
    tile_idx: int
    contour_idx: int
    x: int                             # matched corner position, frame coords
    y: int
    chamfer_score: float


def shortlist(track: Track, cache: MserWindowCache,
              cfg: TrackerConfig) -> list[ShortlistEntry]:
    """Chamfer-shortlisted candidate positions for one track."""
    h, w = cache.frame_shape
    r = cfg.search_radius
    search = Rect(track.x - r, track.y - r, 2 * r + 1, 2 * r + 1).clamped(w, h)
    if search is None:
        return []
    tile_idx = _select_tile(cache, search)
    tile = cache.tiles[tile_idx]
    local_search = Rect(search.x0 - tile.rect.x0, search.y0 - tile.rect.y0,
                        search.w, search.h).clamped(tile.rect.w, tile.rect.h)
    if local_search is None:
        return []
    template = track.arc_points - np.array([track.x, track.y])

    num_levels = chamfer.default_num_levels(search.w, search.h)
    while num_levels > 1 and min(tile.rect.w, tile.rect.h) >> (num_levels - 1) \
            < chamfer.MIN_COARSE_DIM:
        num_levels -= 1

    candidate_ids = [ci for ci, cand in enumerate(tile.contours)
                     if cand.bbox.intersects(search)]
    if not candidate_ids:
        return []
    matches = chamfer.hierarchical_match_stack(
        template, tile.stack(num_levels), candidate_ids, local_search,
        cfg.chamfer_accept, num_levels)
    entries = []
    for ci in candidate_ids:
        for m in matches[ci]:
            entries.append(ShortlistEntry(
                tile_idx=tile_idx, contour_idx=ci,
                x=tile.rect.x0 + m.dx, y=tile.rect.y0 + m.dy,
                chamfer_score=m.score))
    entries.sort(key=lambda e: (e.chamfer_score, e.contour_idx, e.y, e.x))
    return entries[:cfg.top_k]


def _candidate_patch(frame: np.ndarray, cand: CandidateContour, x: int, y: int,
                     cfg: TrackerConfig) -> partssd.SupportPatch:
    params = cfg.detect_params(tracking_mode=True)
    region = _RegionView(cand.region_pixels)
    contour = mser.Contour(points=cand.points, closed=True)
    side_a, side_b, valid, eff, degenerate = corners.split_support_region(
        frame, region, contour, x, y, params)
    return partssd.extract_support_patch(frame, x, y, cfg.patch_size,
                                         side_a, side_b, valid, eff, degenerate)


class _RegionView:
    """Duck-typed stand-in for ExtremalRegion when only pixels are needed."""

    def __init__(self, pixels: np.ndarray):
        self.pixels = pixels


@dataclass
class TrackOutcome:
    track_id: int
    matched: bool
    x: int = 0
    y: int = 0
    chamfer_score: float | None = None
    ssd_score: float | None = None
    combination: str | None = None
    entry: ShortlistEntry | None = None
    entries: tuple[ShortlistEntry, ...] = ()
    shortlist_s: float = 0.0           # chamfer-shortlisting wall time
    verify_s: float = 0.0              # part-SSD verification wall time


def _match_track(track: Track, frame: np.ndarray, cache: MserWindowCache,
                 cfg: TrackerConfig) -> TrackOutcome:
    t0 = time.perf_counter()
    entries = shortlist(track, cache, cfg)
    t1 = time.perf_counter()
    if not entries:
        return TrackOutcome(track_id=track.id, matched=False,
                            shortlist_s=t1 - t0)
    patches = [_candidate_patch(frame, cache.tiles[e.tile_idx].contours[e.contour_idx],
                                e.x, e.y, cfg) for e in entries]
    verdict = partssd.verify_candidates(track.patch, patches, cfg.ssd_threshold,
                                        cfg.min_overlap)
    t2 = time.perf_counter()
    if verdict is None:
        return TrackOutcome(track_id=track.id, matched=False,
                            entries=tuple(entries),
                            shortlist_s=t1 - t0, verify_s=t2 - t1)
    idx, result = verdict
    e = entries[idx]
    return TrackOutcome(track_id=track.id, matched=True, x=e.x, y=e.y,
                        chamfer_score=e.chamfer_score, ssd_score=result.score,
                        combination=result.combination, entry=e,
                        entries=tuple(entries),
                        shortlist_s=t1 - t0, verify_s=t2 - t1)


def _reanchor(track: Track, frame: np.ndarray, outcome: TrackOutcome,
              cache: MserWindowCache, cfg: TrackerConfig, frame_idx: int) -> None:
    e = outcome.entry
    cand = cache.tiles[e.tile_idx].contours[e.contour_idx]
    # The matched corner sits on (or next to) the candidate contour: anchor
    # the fresh template arc at the nearest contour point.
    d = np.abs(cand.points - np.array([e.x, e.y])).sum(axis=1)
    anchor = int(d.argmin())
    idx = corners._window_indices(len(cand.points), anchor, cfg.arc_radius, True)
    track.x, track.y = e.x, e.y
    track.arc_points = cand.points[idx]
    track.patch = _candidate_patch(frame, cand, e.x, e.y, cfg)
    track.misses = 0
    track.history.append(HistoryEntry(frame=frame_idx, x=e.x, y=e.y,
                                      chamfer_score=outcome.chamfer_score,
                                      ssd_score=outcome.ssd_score,
                                      combination=outcome.combination))


def track_from_corner(track_id: int, corner: corners.CornerPoint,
                      frame: np.ndarray, cfg: TrackerConfig,
                      frame_idx: int) -> Track:
    contour = corner.segment.contour
    idx = corners._window_indices(len(contour), corner.contour_index,
                                cfg.arc_radius, contour.closed)
    patch = partssd.extract_support_patch(
        frame, corner.x, corner.y, cfg.patch_size, corner.side_a, corner.side_b,
        corner.valid, corner.patch_rect, corner.degenerate)
    t = Track(id=track_id, x=corner.x, y=corner.y,
              arc_points=contour.points[idx], patch=patch)
    t.history.append(HistoryEntry(frame=frame_idx, x=corner.x, y=corner.y,
                                  chamfer_score=None, ssd_score=None,
                                  combination=None))
    return t


@dataclass
class FrameResult:
    frame: int
    outcomes: list[TrackOutcome]
    spawned: list[int]
    precompute_s: float = 0.0          # per-window boundary precomputation


def step(tracks: list[Track], frame: np.ndarray, frame_idx: int,
         cfg: TrackerConfig, next_id: int | None = None,
         cache: MserWindowCache | None = None) -> FrameResult:
    """Advance every active track into ``frame``; mutates track state."""
    frame = as_gray(frame)
    last = max((t.history[-1].frame for t in tracks if t.history), default=-1)
    if tracks and frame_idx <= last:
        raise FrameOrderError(f"frame {frame_idx} not after {last}")
    precompute_s = 0.0
    if cache is None:
        t0 = time.perf_counter()
        cache = precompute_mser_windows(frame, cfg)
        precompute_s = time.perf_counter() - t0
    active = [t for t in tracks if t.status == ACTIVE]
    active.sort(key=lambda t: t.id)

    if cfg.jobs > 1 and len(active) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(
                lambda t: _match_track(t, frame, cache, cfg), active))
    else:
        outcomes = [_match_track(t, frame, cache, cfg) for t in active]

    by_id = {t.id: t for t in tracks}
    for out in outcomes:
        t = by_id[out.track_id]
        if out.matched:
            _reanchor(t, frame, out, cache, cfg, frame_idx)
        else:
            t.misses += 1
            if t.misses >= cfg.max_misses:
                t.status = LOST

    spawned: list[int] = []
    if cfg.redetect_interval > 0 and frame_idx % cfg.redetect_interval == 0:
        if next_id is None:
            next_id = max(by_id, default=-1) + 1
        live = [(t.x, t.y) for t in tracks if t.status == ACTIVE]
        for corner in corners.detect_corners(frame, cfg.detect_params()):
            if any((corner.x - x) ** 2 + (corner.y - y) ** 2
                   < cfg.min_spawn_dist ** 2 for x, y in live):
                continue
            tracks.append(track_from_corner(next_id, corner, frame, cfg, frame_idx))
            live.append((corner.x, corner.y))
            spawned.append(next_id)
            next_id += 1
    return FrameResult(frame=frame_idx, outcomes=outcomes, spawned=spawned,
                       precompute_s=precompute_s)


# ---------------------------------------------------------------------------
# Track log

@dataclass(frozen=True)
class TrackRow:
    track_id: int
    frame: int
    x: float                           # integral for the boundary tracker,
    y: float                           # sub-pixel for the KLT baseline
    status: str
    chamfer_score: float | None
    ssd_score: float | None
    combination: str | None


TRACKLOG_HEADER = ["track_id", "frame", "x", "y", "status",
                   "chamfer_score", "ssd_score", "combination"]


def _fmt_pos(v) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.6g}"


def write_tracklog(path, rows: list[TrackRow]) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(TRACKLOG_HEADER)
        for r in rows:
            wr.writerow([
                r.track_id, r.frame, _fmt_pos(r.x), _fmt_pos(r.y), r.status,
                "" if r.chamfer_score is None else f"{r.chamfer_score:.6g}",
                "" if r.ssd_score is None else f"{r.ssd_score:.6g}",
                r.combination or ""])


def read_tracklog(path) -> list[TrackRow]:
    rows = []
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        for rec in rd:
            rows.append(TrackRow(
                track_id=int(rec["track_id"]), frame=int(rec["frame"]),
                x=float(rec["x"]), y=float(rec["y"]), status=rec["status"],
                chamfer_score=float(rec["chamfer_score"]) if rec["chamfer_score"] else None,
                ssd_score=float(rec["ssd_score"]) if rec["ssd_score"] else None,
                combination=rec["combination"] or None))
    return rows


def run_sequence(frames, cfg: TrackerConfig | None = None,
                 tracks_out: list[Track] | None = None,
                 observer=None) -> list[TrackRow]:
    """Detect on frame 0, then track through the remaining frames; returns
    the complete log (one row per live track per frame).  ``observer``, when
    given, is called with each FrameResult (timings, shortlists)."""
    cfg = cfg or TrackerConfig()
    it = iter(frames)
    try:
        first = as_gray(next(it))
    except StopIteration:
        raise EmptySequenceError("need at least one frame")

    pts = corners.detect_corners(first, cfg.detect_params())
    tracks = [track_from_corner(i, c, first, cfg, 0)
              for i, c in enumerate(pts)]
    if tracks_out is not None:
        tracks_out.extend(tracks)
    rows = [TrackRow(t.id, 0, t.x, t.y, ACTIVE, None, None, None)
            for t in tracks]
    next_id = len(tracks)

    for frame_idx, frame in enumerate(it, start=1):
        result = step(tracks, frame, frame_idx, cfg, next_id=next_id)
        if observer is not None:
            observer(result)
        next_id = max((t.id for t in tracks), default=-1) + 1
        by_id = {t.id: t for t in tracks}
        for out in result.outcomes:
            t = by_id[out.track_id]
            if out.matched:
                rows.append(TrackRow(t.id, frame_idx, out.x, out.y, ACTIVE,
                                     out.chamfer_score, out.ssd_score,
                                     out.combination))
            elif t.status == LOST:
                rows.append(TrackRow(t.id, frame_idx, t.x, t.y, LOST,
                                     None, None, None))
            else:
                # missed but still coasting (max_misses > 1)
                rows.append(TrackRow(t.id, frame_idx, t.x, t.y, ACTIVE,
                                     None, None, None))
        for tid in result.spawned:
            t = by_id.get(tid) or next(tr for tr in tracks if tr.id == tid)
            rows.append(TrackRow(t.id, frame_idx, t.x, t.y, ACTIVE,
                                 None, None, None))
    rows.sort(key=lambda r: (r.frame, r.track_id))
    return rows
