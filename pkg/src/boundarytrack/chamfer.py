"""Hierarchical chamfer matching over distance-transform pyramids.

A template contour is located inside a window's edge structure by scoring
translations against a distance field (average distance of template points
to the nearest edge point), coarse-to-fine: every offset is scanned at the
coarsest level, survivors spawn their refinement neighborhoods one level
down, and final scores are computed at full resolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imgcore import Rect, distance_transform


class ChamferError(Exception):
    pass


class EmptyEdgesError(ChamferError):
    pass


class EmptyTemplateError(ChamferError):
    pass


class TooManyLevelsError(ChamferError):
    pass


MIN_COARSE_DIM = 8

# Pruning slack in coarse pixels.  Scores are exact mean nearest-edge
# distances (out-of-field points included, see _scores_at), so for a fine
# offset with score s the level-k ancestor scores at most s/2^k + 2*sqrt(2):
# flooring template point + offset to the coarse grid moves the query by at
# most 1 per axis (sqrt(2)), and flooring the nearest edge point moves it by
# at most another sqrt(2).  Any slack >= 2*sqrt(2) keeps the search complete.
COARSE_SLACK = 3.0


class EdgePyramid:
    """Distance fields from finest (level 0) to coarsest, factor 2 apart.

    Levels are materialized on first access and cached, so pyramids whose
    coarse level rejects every offset never pay for the fine fields.
    """

    def __init__(self, edge_points: np.ndarray, dims: tuple[int, int],
                 num_levels: int):
        self._points = np.asarray(edge_points, dtype=np.int64).reshape(-1, 2)
        self.dims = dims
        self.num_levels = num_levels
        self._levels: dict[int, np.ndarray] = {}

    def level(self, k: int) -> np.ndarray:
        if k not in self._levels:
            w, h = self.dims
            lw = -(-w // (1 << k))
            lh = -(-h // (1 << k))
            mask = np.zeros((lh, lw), dtype=bool)
            p = self._points >> k
            keep = (p[:, 0] >= 0) & (p[:, 0] < lw) & (p[:, 1] >= 0) & (p[:, 1] < lh)
            p = p[keep]
            if len(p) == 0:
                raise EmptyEdgesError("all edge points fall outside the field")
            mask[p[:, 1], p[:, 0]] = True
            self._levels[k] = distance_transform(mask)
        return self._levels[k]

    @property
    def levels(self) -> tuple[np.ndarray, ...]:
        return tuple(self.level(k) for k in range(self.num_levels))


class EdgePyramidStack:
    """Per-level stacks of several same-sized pyramids' distance fields.

    Matching one template against many candidate edge sets in the same
    window gathers from one (C, h, w) array per level instead of issuing a
    separate scoring pass per candidate.
    """

    def __init__(self, pyramids: list[EdgePyramid]):
        if not pyramids:
            raise EmptyEdgesError("stack needs at least one pyramid")
        dims = pyramids[0].dims
        if any(p.dims != dims for p in pyramids):
            raise ChamferError("stacked pyramids must share window dims")
        self.pyramids = list(pyramids)
        self.dims = dims
        self._levels: dict[int, np.ndarray] = {}

    #: padding (px) around each stacked field, carrying the true distance
    #: transform so template points that fall slightly outside the window are
    #: scored exactly without per-call bounds handling.
    MARGIN = 24

    def __len__(self) -> int:
        return len(self.pyramids)

    def level(self, k: int) -> np.ndarray:
        """The (C, h + 2*MARGIN, w + 2*MARGIN) stack of padded distance
        fields for level k.  The margin holds the exact distance transform
        (computed over the padded grid), so reads there agree bit-for-bit
        with the direct nearest-edge distances used by _scores_at."""
        if k not in self._levels:
            m = self.MARGIN
            w, h = self.dims
            lw = -(-w // (1 << k))
            lh = -(-h // (1 << k))
            fields = np.empty((len(self.pyramids), lh + 2 * m, lw + 2 * m))
            for i, pyr in enumerate(self.pyramids):
                p = pyr._points >> k
                keep = ((p[:, 0] >= 0) & (p[:, 0] < lw)
                        & (p[:, 1] >= 0) & (p[:, 1] < lh))
                p = p[keep]
                if len(p) == 0:
                    raise EmptyEdgesError(
                        "all edge points fall outside the field")
                mask = np.zeros((lh + 2 * m, lw + 2 * m), dtype=bool)
                mask[p[:, 1] + m, p[:, 0] + m] = True
                fields[i] = distance_transform(mask)
            self._levels[k] = fields
        return self._levels[k]


@dataclass(frozen=True)
class ChamferMatch:
    dx: int
    dy: int
    score: float


def default_num_levels(search_w: int, search_h: int) -> int:
    """Pyramid depth for a given search window: floor(log2(min_dim/8)) + 1,
    at least 1."""
    m = min(search_w, search_h)
    if m < 2 * MIN_COARSE_DIM:
        return 1
    return int(math.floor(math.log2(m / MIN_COARSE_DIM))) + 1


def build_edge_pyramid(edge_points: np.ndarray, dims: tuple[int, int],
                       num_levels: int) -> EdgePyramid:
    """Distance-field pyramid of a rasterized edge-point set.

    Level k is built from the edge coordinates divided by 2**k (duplicates
    collapsed).  The coarsest level must stay at least 8x8.
    """
    pts = np.asarray(edge_points, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyEdgesError("edge pyramid needs at least one edge point")
    w, h = dims
    if num_levels < 1:
        raise TooManyLevelsError("num_levels must be >= 1")
    top_w = -(-w // (1 << (num_levels - 1)))
    top_h = -(-h // (1 << (num_levels - 1)))
    if num_levels > 1 and (top_w < MIN_COARSE_DIM or top_h < MIN_COARSE_DIM):
        raise TooManyLevelsError(
            f"coarsest level {top_w}x{top_h} below {MIN_COARSE_DIM}x{MIN_COARSE_DIM}")
    return EdgePyramid(pts, (w, h), num_levels)


def _outside_distances(field: np.ndarray, xs: np.ndarray,
                       ys: np.ndarray) -> np.ndarray:
    """Exact nearest-edge distances for positions outside the field, computed
    directly against the edge pixels (the zeros of the distance field)."""
    ey, ex = np.nonzero(field == 0)
    d2 = ((xs[:, None] - ex) ** 2 + (ys[:, None] - ey) ** 2).min(axis=1)
    return np.sqrt(d2)


def _scores_at(template: np.ndarray, field: np.ndarray,
               offsets: np.ndarray) -> np.ndarray:
    """Mean template-point distance for many offsets at once.  In-field
    points read the distance field; points outside it get their exact
    nearest-edge distance, so the score is the true mean everywhere and
    stays continuous across the field border (which the coarse-level
    pruning bound relies on)."""
    fh, fw = field.shape
    xs = offsets[:, 0][:, None] + template[None, :, 0]
    ys = offsets[:, 1][:, None] + template[None, :, 1]
    inb = (xs >= 0) & (xs < fw) & (ys >= 0) & (ys < fh)
    flat = np.clip(ys, 0, fh - 1) * fw + np.clip(xs, 0, fw - 1)
    d = field.ravel()[flat]
    if not inb.all():
        out = ~inb
        d[out] = _outside_distances(field, xs[out], ys[out])
    return d.mean(axis=1)


def chamfer_score(template: np.ndarray, field: np.ndarray,
                  dx: int, dy: int) -> float:
    """Average distance from translated template points to the nearest edge
    point, read off the distance field (points falling outside the field are
    scored by their exact nearest-edge distance)."""
    t = np.asarray(template, dtype=np.int64).reshape(-1, 2)
    if len(t) == 0:
        raise EmptyTemplateError("empty template")
    return float(_scores_at(t, field, np.array([[dx, dy]], dtype=np.int64))[0])


def template_diameter(template: np.ndarray) -> float:
    t = np.asarray(template, dtype=np.int64).reshape(-1, 2)
    return float(max(t[:, 0].max() - t[:, 0].min(), t[:, 1].max() - t[:, 1].min()))


def level_threshold(accept_threshold: float, k: int) -> float:
    """Pruning threshold at pyramid level k: distances shrink by 2**k at
    level k, plus the constant projection slack."""
    if k == 0:
        return accept_threshold
    return accept_threshold / float(1 << k) + COARSE_SLACK


def hierarchical_match(template: np.ndarray, pyramid: EdgePyramid,
                       search: Rect, accept_threshold: float) -> list[ChamferMatch]:
    """Coarse-to-fine chamfer search over all offsets in ``search``.

    Returns every offset whose full-resolution score is within
    ``accept_threshold``, sorted ascending by (score, dy, dx).  Survivor
    offsets at level k spawn their floor-preimage 2x2 neighborhood at level
    k-1, so with the conservative per-level slack the search is complete:
    any offset acceptable at full resolution is returned.
    """
    t0 = np.asarray(template, dtype=np.int64).reshape(-1, 2)
    if len(t0) == 0:
        raise EmptyTemplateError("empty template")
    top = pyramid.num_levels - 1

    # Coarsest level: exhaustive scan of the projected search range.
    lo_x = search.x0 >> top
    hi_x = (search.x1 - 1) >> top
    lo_y = search.y0 >> top
    hi_y = (search.y1 - 1) >> top
    gx, gy = np.meshgrid(np.arange(lo_x, hi_x + 1), np.arange(lo_y, hi_y + 1))
    offsets = np.stack([gx.ravel(), gy.ravel()], axis=1)

    for k in range(top, 0, -1):
        # Duplicates are kept: the completeness bound is on the mean over all
        # template points, multiplicity included.
        tk = t0 >> k
        scores = _scores_at(tk, pyramid.level(k), offsets)
        keep = offsets[scores <= level_threshold(accept_threshold, k)]
        if len(keep) == 0:
            return []
        # Children: exact floor-preimage at the next finer level.  Children
        # of distinct parents are distinct (parent = child >> 1), so the
        # offset set stays duplicate-free by construction.
        kids = np.concatenate([
            keep * 2 + np.array(d) for d in ((0, 0), (1, 0), (0, 1), (1, 1))
        ])
        fine_lo = (search.x0 >> (k - 1), search.y0 >> (k - 1))
        fine_hi = ((search.x1 - 1) >> (k - 1), (search.y1 - 1) >> (k - 1))
        inb = ((kids[:, 0] >= fine_lo[0]) & (kids[:, 0] <= fine_hi[0])
               & (kids[:, 1] >= fine_lo[1]) & (kids[:, 1] <= fine_hi[1]))
        offsets = kids[inb]
        if len(offsets) == 0:
            return []

    scores = _scores_at(t0, pyramid.level(0), offsets)
    ok = scores <= accept_threshold
    results = [ChamferMatch(int(o[0]), int(o[1]), float(s))
               for o, s in zip(offsets[ok], scores[ok])]
    results.sort(key=lambda m: (m.score, m.dy, m.dx))
    return results


def _stack_scores(template: np.ndarray, fields: np.ndarray,
                  cidx: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """_scores_at over (candidate-index, offset) rows against a field stack."""
    m = EdgePyramidStack.MARGIN
    ph, pw = fields.shape[1:]
    xs = offsets[:, 0][:, None] + (template[None, :, 0] + m)
    ys = offsets[:, 1][:, None] + (template[None, :, 1] + m)
    tx0, tx1 = int(template[:, 0].min()), int(template[:, 0].max())
    ty0, ty1 = int(template[:, 1].min()), int(template[:, 1].max())
    ox0, ox1 = int(offsets[:, 0].min()), int(offsets[:, 0].max())
    oy0, oy1 = int(offsets[:, 1].min()), int(offsets[:, 1].max())
    if (ox0 + tx0 + m >= 0 and ox1 + tx1 + m < pw
            and oy0 + ty0 + m >= 0 and oy1 + ty1 + m < ph):
        d = fields.ravel()[cidx[:, None] * (ph * pw) + ys * pw + xs]
    else:
        # Template reaches past the padding: compute those few distances
        # directly so the score stays the exact nearest-edge mean.
        inb = (xs >= 0) & (xs < pw) & (ys >= 0) & (ys < ph)
        flat = (cidx[:, None] * (ph * pw)
                + np.clip(ys, 0, ph - 1) * pw + np.clip(xs, 0, pw - 1))
        d = fields.ravel()[flat]
        if not inb.all():
            rows, cols = np.nonzero(~inb)
            for c in np.unique(cidx[rows]):
                sel = cidx[rows] == c
                r, co = rows[sel], cols[sel]
                d[r, co] = _outside_distances(fields[c], xs[r, co], ys[r, co])
    return d.mean(axis=1)


def hierarchical_match_stack(template: np.ndarray, stack: EdgePyramidStack,
                             candidate_ids, search: Rect,
                             accept_threshold: float,
                             num_levels: int) -> dict[int, list[ChamferMatch]]:
    """hierarchical_match of one template against several candidates at once.

    ``candidate_ids`` selects pyramids from the stack; the result maps each
    id to exactly what hierarchical_match(template, stack.pyramids[id], ...)
    with ``num_levels`` levels would return (same scores, same order), but
    all candidates advance through the pyramid together, one scoring pass
    per level.
    """
    t0 = np.asarray(template, dtype=np.int64).reshape(-1, 2)
    if len(t0) == 0:
        raise EmptyTemplateError("empty template")
    candidate_ids = list(candidate_ids)
    out: dict[int, list[ChamferMatch]] = {c: [] for c in candidate_ids}
    if not candidate_ids:
        return out
    top = num_levels - 1

    lo_x = search.x0 >> top
    hi_x = (search.x1 - 1) >> top
    lo_y = search.y0 >> top
    hi_y = (search.y1 - 1) >> top
    gx, gy = np.meshgrid(np.arange(lo_x, hi_x + 1), np.arange(lo_y, hi_y + 1))
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    offsets = np.tile(grid, (len(candidate_ids), 1))
    cidx = np.repeat(np.array(candidate_ids, dtype=np.int64), len(grid))

    for k in range(top, 0, -1):
        tk = t0 >> k
        scores = _stack_scores(tk, stack.level(k), cidx, offsets)
        ok = scores <= level_threshold(accept_threshold, k)
        keep, ckeep = offsets[ok], cidx[ok]
        if len(keep) == 0:
            return out
        kids = np.concatenate([
            keep * 2 + np.array(d) for d in ((0, 0), (1, 0), (0, 1), (1, 1))
        ])
        ckids = np.tile(ckeep, 4)
        fine_lo = (search.x0 >> (k - 1), search.y0 >> (k - 1))
        fine_hi = ((search.x1 - 1) >> (k - 1), (search.y1 - 1) >> (k - 1))
        inb = ((kids[:, 0] >= fine_lo[0]) & (kids[:, 0] <= fine_hi[0])
               & (kids[:, 1] >= fine_lo[1]) & (kids[:, 1] <= fine_hi[1]))
        offsets, cidx = kids[inb], ckids[inb]
        if len(offsets) == 0:
            return out

    scores = _stack_scores(t0, stack.level(0), cidx, offsets)
    ok = scores <= accept_threshold
    for c, o, s in zip(cidx[ok], offsets[ok], scores[ok]):
        out[int(c)].append(ChamferMatch(int(o[0]), int(o[1]), float(s)))
    for c in candidate_ids:
        out[c].sort(key=lambda m: (m.score, m.dy, m.dx))
    return out


def brute_force_match(template: np.ndarray, field: np.ndarray, search: Rect,
                      accept_threshold: float) -> list[ChamferMatch]:
    """Full-resolution scan of every offset in the search rect; the oracle
    counterpart of hierarchical_match."""
    t0 = np.asarray(template, dtype=np.int64).reshape(-1, 2)
    if len(t0) == 0:
        raise EmptyTemplateError("empty template")
    gx, gy = np.meshgrid(np.arange(search.x0, search.x1),
                         np.arange(search.y0, search.y1))
    offsets = np.stack([gx.ravel(), gy.ravel()], axis=1)
    scores = _scores_at(t0, field, offsets)
    ok = scores <= accept_threshold
    results = [ChamferMatch(int(o[0]), int(o[1]), float(s))
               for o, s in zip(offsets[ok], scores[ok])]
    results.sort(key=lambda m: (m.score, m.dy, m.dx))
    return results
