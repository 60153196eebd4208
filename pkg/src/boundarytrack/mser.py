"""Component trees and Maximally Stable Extremal Regions.

Dark polarity means connected components of ``{p : I(p) <= t}`` (dark blobs
on a light background); light polarity thresholds the inverted image.  Both
use 4-connectivity for regions and 8-connectivity for boundary tracing.

The tree itself is built by ``skimage.morphology.max_tree`` (union-find over
intensity-sorted pixels); everything on top of it - canonicalization,
stability scoring, MSER selection, boundary tracing - lives here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from skimage.morphology import max_tree as _skimage_max_tree

from .imgcore import as_gray

DARK = "dark"
LIGHT = "light"
POLARITIES = (DARK, LIGHT)


class _ChildrenView:
    """children[n] -> array of n's child nodes, resolved on demand from a
    parent-sorted index (no per-node lists are materialized)."""

    def __init__(self, order: np.ndarray, bounds: np.ndarray):
        self._order = order
        self._bounds = bounds

    def __getitem__(self, n: int) -> np.ndarray:
        c = self._order[self._bounds[n]:self._bounds[n + 1]]
        return c[c != n]  # drop the root's self-loop

    def __len__(self) -> int:
        return len(self._bounds) - 1


class MserError(Exception):
    pass


class BadDeltaError(MserError):
    pass


class BadParamsError(MserError):
    pass


@dataclass
class ComponentTree:
    """Canonicalized component tree of one polarity.

    ``u`` is the threshold parameter, oriented so regions grow with
    increasing ``u`` for either polarity (for dark polarity ``u`` equals the
    intensity threshold).  The root is the node whose region is the whole
    image; its level is the extreme intensity actually present.
    """

    polarity: str
    shape: tuple[int, int]           # (h, w)
    level: np.ndarray                # (n,) original intensity of each node
    u: np.ndarray                    # (n,) threshold-ordered level
    parent: np.ndarray               # (n,) parent node index; root points to itself
    area: np.ndarray                 # (n,) subtree pixel count
    node_of_pixel: np.ndarray        # (h, w) node owning each pixel directly
    root: int
    _pix_order: np.ndarray = field(repr=False, default=None)
    _pix_slices: np.ndarray = field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return len(self.level)

    @cached_property
    def children(self) -> "_ChildrenView":
        order = np.argsort(self.parent, kind="stable")
        pars = self.parent[order]
        bounds = np.searchsorted(pars, np.arange(self.n_nodes + 1))
        return _ChildrenView(order, bounds)

    def _pixel_index(self):
        if self._pix_order is None:
            flat_nodes = self.node_of_pixel.ravel()
            order = np.argsort(flat_nodes, kind="stable")
            bounds = np.searchsorted(flat_nodes[order], np.arange(self.n_nodes + 1))
            self._pix_order = order
            self._pix_slices = bounds
        return self._pix_order, self._pix_slices

    def node_pixels(self, node: int) -> np.ndarray:
        """All pixels of the node's region (its whole subtree) as an (m, 2)
        array of (x, y) coordinates."""
        order, bounds = self._pixel_index()
        stack = [node]
        chunks = []
        while stack:
            n = stack.pop()
            chunks.append(order[bounds[n]:bounds[n + 1]])
            stack.extend(self.children[n].tolist())
        flat = np.concatenate(chunks)
        w = self.shape[1]
        return np.stack([flat % w, flat // w], axis=1)


def _small_max_tree(work: np.ndarray) -> tuple[np.ndarray, int]:
    """Max-tree (per-pixel parent, root pixel) by union-find over pixels in
    decreasing value order, 4-connected.

    Fallback for images with a dimension below 3, where skimage's max_tree
    miscomputes raveled neighbor offsets (wrapping across rows) or crashes.
    """
    h, w = work.shape
    flat = work.ravel().astype(np.int64)
    n = flat.size
    proc = np.argsort(-flat, kind="stable")
    parent = np.full(n, -1, dtype=np.int64)
    zpar = np.full(n, -1, dtype=np.int64)

    def find(x):
        while zpar[x] != x:
            zpar[x] = zpar[zpar[x]]
            x = int(zpar[x])
        return x

    done = np.zeros(n, dtype=bool)
    for p in proc:
        p = int(p)
        parent[p] = p
        zpar[p] = p
        done[p] = True
        py, px = divmod(p, w)
        for qy, qx in ((py, px - 1), (py, px + 1), (py - 1, px), (py + 1, px)):
            if not (0 <= qx < w and 0 <= qy < h):
                continue
            q = qy * w + qx
            if done[q]:
                r = find(q)
                if r != p:
                    parent[r] = p
                    zpar[r] = p
    return parent, int(proc[-1])


def build_component_tree(img: np.ndarray, polarity: str = DARK) -> ComponentTree:
    """Build the full component tree for one polarity."""
    img = as_gray(img)
    if polarity not in POLARITIES:
        raise MserError(f"unknown polarity {polarity!r}")
    work = (255 - img) if polarity == DARK else img
    h, w = work.shape
    if h * w == 1:
        # max_tree cannot handle a single pixel; the tree is trivial.
        return ComponentTree(
            polarity=polarity, shape=(h, w),
            level=np.array([int(img[0, 0])]), u=np.array([255 - int(work[0, 0])]),
            parent=np.array([0]), area=np.array([1]),
            node_of_pixel=np.zeros((h, w), dtype=np.int64), root=0)

    flat = work.ravel().astype(np.int64)
    n_px = flat.size
    if h < 3 or w < 3:
        parent_px, root_px = _small_max_tree(work)
    else:
        parent_img, order = _skimage_max_tree(work, connectivity=1)
        parent_px = parent_img.ravel().astype(np.int64)
        root_px = order[0]

    # Canonical pixel of each plateau component: a pixel is canonical when
    # its tree parent sits at a different level (or it is the root).
    is_canon = flat[parent_px] != flat
    is_canon[root_px] = True
    canon = np.where(is_canon, np.arange(n_px), parent_px)
    while True:
        nxt = canon[canon]
        if np.array_equal(nxt, canon):
            break
        canon = nxt

    canon_pixels = np.flatnonzero(is_canon)
    n_nodes = len(canon_pixels)
    node_index = np.full(n_px, -1, dtype=np.int64)
    node_index[canon_pixels] = np.arange(n_nodes)
    node_of_pixel = node_index[canon].reshape(h, w)

    parent = node_index[canon[parent_px[canon_pixels]]]
    root = node_index[canon[root_px]]
    parent[root] = root

    work_level = flat[canon_pixels]
    u = 255 - work_level
    level = img.ravel()[canon_pixels].astype(np.int64)

    # Subtree areas: accumulate child areas into parents level by level
    # (parents always have strictly larger u, so one pass over distinct
    # u values in ascending order is enough).
    area = np.bincount(node_of_pixel.ravel(), minlength=n_nodes).astype(np.int64)
    for uv in np.unique(u):
        sel = np.flatnonzero((u == uv) & (parent != np.arange(n_nodes)))
        if len(sel):
            np.add.at(area, parent[sel], area[sel])

    return ComponentTree(polarity=polarity, shape=(h, w), level=level, u=u,
                         parent=parent, area=area, node_of_pixel=node_of_pixel,
                         root=root)


# ---------------------------------------------------------------------------
# Stability

def _ancestors_at(tree: ComponentTree, targets: np.ndarray) -> np.ndarray:
    """For every node, the highest ancestor whose u is <= the node's target.
    Vectorized binary lifting; u strictly increases along root paths."""
    n = tree.n_nodes
    lifts = [tree.parent]
    while True:
        nxt = lifts[-1][lifts[-1]]
        if np.array_equal(nxt, lifts[-1]):
            break
        lifts.append(nxt)
    cur = np.arange(n)
    for lift in reversed(lifts):
        cand = lift[cur]
        ok = (tree.u[cand] <= targets) & (cand != cur)
        cur = np.where(ok, cand, cur)
    # Finish with single parent steps (binary lifting can undershoot).
    while True:
        cand = tree.parent[cur]
        ok = (tree.u[cand] <= targets) & (cand != cur)
        if not ok.any():
            return cur
        cur = np.where(ok, cand, cur)


def _best_descendant_area(tree: ComponentTree, node: int, t: int) -> int:
    """Largest area among maximal descendants alive at threshold t; the
    node's own area when nothing below reaches t (clamp at tree extremes)."""
    best = 0
    stack = list(tree.children[node])
    while stack:
        c = stack.pop()
        if tree.area[c] <= best:
            continue  # nothing inside can beat the current best
        if tree.u[c] <= t:
            best = int(tree.area[c])
        else:
            stack.extend(tree.children[c].tolist())
    return best if best > 0 else int(tree.area[node])


def stability_score(tree: ComponentTree, node: int, delta: int) -> float:
    """Relative area variation q = (area(u+delta) - area(u-delta)) / area(u),
    clamped at the tree extremes.  Lower q = more stable."""
    if delta < 1:
        raise BadDeltaError(f"delta must be >= 1, got {delta}")
    target = int(tree.u[node]) + delta
    up = node
    while tree.parent[up] != up and tree.u[tree.parent[up]] <= target:
        up = int(tree.parent[up])
    area_plus = int(tree.area[up])
    area_minus = _best_descendant_area(tree, node, int(tree.u[node]) - delta)
    return (area_plus - area_minus) / float(tree.area[node])


def _best_descendant_areas(tree: ComponentTree, delta: int) -> np.ndarray:
    """_best_descendant_area at t = u - delta for every node at once.

    A node c is the maximal alive descendant for exactly the ancestors whose
    u lies in [u[c] + delta, u[parent(c)] + delta - 1].  Those ancestors sit
    in a u-window of width delta starting at the parent, so at most delta
    vectorized climb steps distribute every candidate area.
    """
    n = tree.n_nodes
    best = np.zeros(n, dtype=np.int64)
    c = np.flatnonzero(tree.parent != np.arange(n))
    anc = tree.parent[c]
    hi = tree.u[anc].astype(np.int64) + (delta - 1)
    lo = tree.u[c].astype(np.int64) + delta
    area_c = tree.area[c].astype(np.int64)
    while len(c):
        ua = tree.u[anc].astype(np.int64)
        ok = ua <= hi
        rec = ok & (ua >= lo)
        if rec.any():
            np.maximum.at(best, anc[rec], area_c[rec])
        adv = ok & (tree.parent[anc] != anc)
        c, anc = c[adv], tree.parent[anc[adv]]
        hi, lo, area_c = hi[adv], lo[adv], area_c[adv]
    return np.where(best > 0, best, tree.area)


def stability_scores(tree: ComponentTree, delta: int) -> np.ndarray:
    """q for every node at once."""
    if delta < 1:
        raise BadDeltaError(f"delta must be >= 1, got {delta}")
    anc = _ancestors_at(tree, tree.u + delta)
    area_plus = tree.area[anc].astype(np.float64)
    area_minus = _best_descendant_areas(tree, delta).astype(np.float64)
    return (area_plus - area_minus) / tree.area


@dataclass
class ExtremalRegion:
    """One selected stable region; pixel membership is materialized lazily."""

    tree: ComponentTree
    node: int
    level: int
    area: int
    stability: float
    _pixels: np.ndarray | None = field(default=None, repr=False)

    @property
    def pixels(self) -> np.ndarray:
        if self._pixels is None:
            self._pixels = self.tree.node_pixels(self.node)
        return self._pixels

    def local_mask(self) -> tuple[np.ndarray, int, int]:
        """Boolean mask over the region's bounding box plus its origin."""
        pts = self.pixels
        x0 = int(pts[:, 0].min())
        y0 = int(pts[:, 1].min())
        m = np.zeros((int(pts[:, 1].max()) - y0 + 1,
                      int(pts[:, 0].max()) - x0 + 1), dtype=bool)
        m[pts[:, 1] - y0, pts[:, 0] - x0] = True
        return m, x0, y0


def extract_msers(tree: ComponentTree, delta: int, max_variation: float,
                  min_area: int, max_area: int) -> list[ExtremalRegion]:
    """Nodes that are local minima of q along their root path, filtered by
    max_variation and area bounds.  Raising max_variation always yields a
    superset (the local-minimum structure does not depend on it)."""
    if min_area < 1 or max_area < min_area:
        raise BadParamsError(f"bad area bounds [{min_area}, {max_area}]")
    q = stability_scores(tree, delta)
    idx = np.arange(tree.n_nodes)
    nonroot = tree.parent != idx
    child_min = np.full(tree.n_nodes, np.inf)
    np.minimum.at(child_min, tree.parent[nonroot], q[nonroot])
    ok = ((q <= max_variation)
          & (tree.area >= min_area) & (tree.area <= max_area)
          & (q <= q[tree.parent])          # root compares with itself
          & (q <= child_min))
    return [ExtremalRegion(tree=tree, node=int(n), level=int(tree.level[n]),
                           area=int(tree.area[n]), stability=float(q[n]))
            for n in np.flatnonzero(ok)]


# ---------------------------------------------------------------------------
# Boundary tracing

@dataclass(frozen=True)
class Contour:
    """Ordered outer-boundary pixels, (n, 2) array of (x, y)."""

    points: np.ndarray
    closed: bool = True

    def __len__(self) -> int:
        return len(self.points)


# Moore neighborhood scanned clockwise in screen coordinates (y grows down),
# starting east.
_MOORE = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


def trace_mask_boundary(mask: np.ndarray, x_off: int = 0, y_off: int = 0) -> Contour:
    """Moore boundary tracing of the (single 4-connected) region in ``mask``,
    clockwise, starting at the topmost-leftmost pixel.

    The walk is deterministic in the state (current pixel, backtrack pixel);
    tracing runs until a state repeats and emits exactly one boundary cycle,
    which also handles one-pixel-wide spurs.
    """
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        raise MserError("cannot trace an empty region")
    i = np.lexsort((xs, ys))[0]  # topmost, then leftmost
    start = (int(xs[i]), int(ys[i]))
    h, w = mask.shape

    def inside(p):
        return 0 <= p[0] < w and 0 <= p[1] < h and mask[p[1], p[0]]

    c = start
    b = (start[0] - 1, start[1])  # due west: guaranteed outside the region
    pts: list[tuple[int, int]] = []
    seen: dict[tuple, int] = {}
    while True:
        key = (c, b)
        if key in seen:
            pts = pts[seen[key]:]
            break
        seen[key] = len(pts)
        b_dir = _MOORE_INDEX[(b[0] - c[0], b[1] - c[1])]
        nxt = None
        for k in range(1, 9):
            d = (b_dir + k) % 8
            cand = (c[0] + _MOORE[d][0], c[1] + _MOORE[d][1])
            if inside(cand):
                nxt = cand
                break
        if nxt is None:
            pts = [start]  # isolated pixel
            break
        pts.append(c)
        prev_d = (b_dir + k - 1) % 8
        b = (c[0] + _MOORE[prev_d][0], c[1] + _MOORE[prev_d][1])
        c = nxt
    arr = np.array(pts, dtype=np.int64)
    arr[:, 0] += x_off
    arr[:, 1] += y_off
    return Contour(points=arr, closed=True)


def trace_boundary(region: ExtremalRegion) -> Contour:
    """Closed clockwise outer-boundary contour of a region."""
    m, x0, y0 = region.local_mask()
    return trace_mask_boundary(m, x0, y0)
