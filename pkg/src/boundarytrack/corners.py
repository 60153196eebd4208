"""Corner detection on stable level lines.

A corner is a point of high curvature on the traced boundary of a stable
extremal region: curvature is scored as the smaller eigenvalue of the local
contour-point scatter matrix ("large in both directions" means the line
turns), and corners carry the two-sided split of their support region by
the level line.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mser
from .imgcore import Rect, as_gray


class ArcTooShortError(Exception):
    pass


@dataclass(frozen=True)
class DetectParams:
    """Knobs of the corner detector; defaults follow the tracking setup
    (scale 8.4, 41x41 support patches)."""

    scale: float = 8.4
    cornerness_threshold: float = 2.0
    patch_size: int = 41
    min_side_pixels: int = 40
    min_contour_points: int = 17          # ~2x scale
    mser_delta: int = 10
    mser_max_variation: float = 0.25
    mser_min_area: int = 25
    mser_max_area_frac: float = 0.5

    def __post_init__(self):
        if self.patch_size % 2 != 1:
            raise ValueError("patch_size must be odd")


@dataclass
class LevelLineSegment:
    contour: mser.Contour
    level: int
    stability: float
    region: mser.ExtremalRegion


@dataclass
class CornerPoint:
    x: int
    y: int
    scale: float
    cornerness: float
    segment: LevelLineSegment
    contour_index: int
    arc_indices: np.ndarray          # contour indices within the scale window
    side_a: np.ndarray               # bool over the patch, the region side
    side_b: np.ndarray               # bool over the patch, the complement side
    valid: np.ndarray                # bool, pixels actually inside the image
    patch_rect: Rect                 # effective (clamped) patch rect
    degenerate: bool = False

    @property
    def position(self) -> tuple[int, int]:
        return (self.x, self.y)


def _window_indices(n: int, idx: int, radius: int, closed: bool) -> np.ndarray:
    if closed:
        if 2 * radius + 1 >= n:
            return np.arange(n)  # window covers the whole contour
        return (np.arange(idx - radius, idx + radius + 1) % n)
    lo = max(0, idx - radius)
    hi = min(n, idx + radius + 1)
    return np.arange(lo, hi)


def _lambda_min(xx: float, xy: float, yy: float) -> float:
    half_tr = 0.5 * (xx + yy)
    det_root = np.sqrt(max(0.0, (0.5 * (xx - yy)) ** 2 + xy * xy))
    return max(0.0, half_tr - det_root)


def cornerness(contour: mser.Contour, idx: int, scale: float) -> float:
    """Smaller eigenvalue of the centered scatter of contour points within
    arc distance <= scale of point idx (arc distance = index distance)."""
    n = len(contour)
    radius = int(scale)
    w = _window_indices(n, idx, radius, contour.closed)
    if len(w) < 3:
        raise ArcTooShortError(f"only {len(w)} points in the arc window")
    pts = contour.points[w].astype(np.float64)
    pts -= pts.mean(axis=0)
    cov = pts.T @ pts / len(pts)
    return _lambda_min(cov[0, 0], cov[0, 1], cov[1, 1])


def cornerness_profile(contour: mser.Contour, scale: float) -> np.ndarray:
    """cornerness at every contour index, vectorized with windowed sums."""
    n = len(contour)
    radius = int(scale)
    if contour.closed and 2 * radius + 1 >= n:
        # every window covers the whole contour: the profile is constant
        pts = contour.points.astype(np.float64)
        pts = pts - pts.mean(axis=0)
        cov = pts.T @ pts / n
        return np.full(n, _lambda_min(cov[0, 0], cov[0, 1], cov[1, 1]))
    p = contour.points.astype(np.float64)
    if contour.closed and radius > 0:
        ext = np.concatenate([p[-radius:], p, p[:radius]])
    else:
        ext = p
    x, y = ext[:, 0], ext[:, 1]
    mats = np.stack([x, y, x * x, y * y, x * y], axis=1)
    c = np.concatenate([np.zeros((1, 5)), np.cumsum(mats, axis=0)])
    out = np.empty(n)
    for i in range(n):
        if contour.closed:
            lo = i
            hi = i + 2 * radius + 1
        else:
            lo = max(0, i - radius)
            hi = min(n, i + radius + 1)
        cnt = hi - lo
        if cnt < 3:
            out[i] = 0.0
            continue
        sx, sy, sxx, syy, sxy = (c[hi] - c[lo])
        mx, my = sx / cnt, sy / cnt
        out[i] = _lambda_min(sxx / cnt - mx * mx, sxy / cnt - mx * my,
                             syy / cnt - my * my)
    return out


def _nms(profile: np.ndarray, radius: int, closed: bool) -> list[int]:
    """Indices that are the maximum of their arc window, strictly above at
    least one neighbor; ties keep only the lowest index in the window."""
    n = len(profile)
    keep = []
    for i in range(n):
        w = _window_indices(n, i, radius, closed)
        w = w[w != i]
        if len(w) == 0:
            continue
        vals = profile[w]
        if (vals > profile[i]).any():
            continue
        ties = w[vals == profile[i]]
        if len(ties) == len(w):
            continue  # locally constant profile: no corner
        if len(ties) and ties.min() < i:
            continue
        keep.append(i)
    return keep


def split_support_region(img: np.ndarray, region: mser.ExtremalRegion,
                         contour: mser.Contour, cx: int, cy: int,
                         params: DetectParams):
    """Divide the support patch centered on (cx, cy) into the region side and
    the complement side, excluding the contour pixels themselves.

    Returns (side_a, side_b, valid, patch_rect, degenerate): boolean masks
    over the full patch_size x patch_size patch; pixels outside the image
    are in neither side and flagged invalid.
    """
    img = as_gray(img)
    h, w = img.shape
    half = params.patch_size // 2
    rect = Rect(cx - half, cy - half, params.patch_size, params.patch_size)
    eff = rect.clamped(w, h)

    s = params.patch_size
    valid = np.zeros((s, s), dtype=bool)
    valid[eff.y0 - rect.y0:eff.y1 - rect.y0, eff.x0 - rect.x0:eff.x1 - rect.x0] = True

    inside = np.zeros((s, s), dtype=bool)
    pts = region.pixels
    sel = ((pts[:, 0] >= rect.x0) & (pts[:, 0] < rect.x1)
           & (pts[:, 1] >= rect.y0) & (pts[:, 1] < rect.y1))
    pp = pts[sel]
    inside[pp[:, 1] - rect.y0, pp[:, 0] - rect.x0] = True

    on_contour = np.zeros((s, s), dtype=bool)
    cpts = contour.points
    sel = ((cpts[:, 0] >= rect.x0) & (cpts[:, 0] < rect.x1)
           & (cpts[:, 1] >= rect.y0) & (cpts[:, 1] < rect.y1))
    cp = cpts[sel]
    on_contour[cp[:, 1] - rect.y0, cp[:, 0] - rect.x0] = True

    side_a = inside & valid & ~on_contour
    side_b = ~inside & valid & ~on_contour
    degenerate = (side_a.sum() < params.min_side_pixels
                  or side_b.sum() < params.min_side_pixels)
    return side_a, side_b, valid, eff, degenerate


def corners_on_segment(img: np.ndarray, segment: LevelLineSegment,
                       params: DetectParams) -> list[CornerPoint]:
    """Corner candidates on one traced level line."""
    contour = segment.contour
    if len(contour) < params.min_contour_points:
        return []
    radius = int(params.scale)
    profile = cornerness_profile(contour, params.scale)
    out = []
    for i in _nms(profile, radius, contour.closed):
        if profile[i] <= params.cornerness_threshold:
            continue
        x, y = (int(v) for v in contour.points[i])
        side_a, side_b, valid, eff, degenerate = split_support_region(
            img, segment.region, contour, x, y, params)
        out.append(CornerPoint(
            x=x, y=y, scale=params.scale, cornerness=float(profile[i]),
            segment=segment, contour_index=i,
            arc_indices=_window_indices(len(contour), i, radius, contour.closed),
            side_a=side_a, side_b=side_b, valid=valid, patch_rect=eff,
            degenerate=degenerate))
    return out


def stable_segments(img: np.ndarray, delta: int, max_variation: float,
                    min_area: int, max_area: int) -> list[LevelLineSegment]:
    """Traced boundaries of stable regions, both polarities pooled."""
    segments = []
    for polarity in mser.POLARITIES:
        tree = mser.build_component_tree(img, polarity)
        for region in mser.extract_msers(tree, delta, max_variation,
                                         min_area, max_area):
            contour = mser.trace_boundary(region)
            segments.append(LevelLineSegment(
                contour=contour, level=region.level,
                stability=region.stability, region=region))
    return segments


def detect_corners(img: np.ndarray, params: DetectParams | None = None) -> list[CornerPoint]:
    """Full corner detection: stable level lines, cornerness maxima along
    each, support-region split for every accepted corner."""
    img = as_gray(img)
    params = params or DetectParams()
    h, w = img.shape
    max_area = max(1, int(params.mser_max_area_frac * h * w))
    corners = []
    for seg in stable_segments(img, params.mser_delta, params.mser_max_variation,
                               params.mser_min_area, max_area):
        corners.extend(corners_on_segment(img, seg, params))
    return corners
