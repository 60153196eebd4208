"""Inverse-compositional Lucas-Kanade point tracker (translation-only).

The comparison baseline: template gradients and the 2x2 Hessian are computed
once on the previous frame, then the translation is refined iteratively with
bilinear sub-pixel sampling on the next frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import downsample2


class KltError(Exception):
    pass


class SingularHessianError(KltError):
    pass


class KltOutOfBoundsError(KltError):
    pass


@dataclass(frozen=True)
class KltConfig:
    window: int = 41
    max_iters: int = 30
    eps: float = 0.01             # convergence threshold on the update norm
    min_eigen: float = 1e-4       # per-pixel-normalized Hessian eigenvalue
    pyramid_levels: int = 1       # >1 enables coarse-to-fine tracking

    def __post_init__(self):
        if self.window % 2 != 1:
            raise ValueError("window must be odd")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class KltResult:
    x: float
    y: float
    converged: bool
    iterations: int
    residual: float
    error: str | None = None      # "singular" / "oob" when tracking failed

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    i = img
    return ((1 - fy) * ((1 - fx) * i[y0, x0] + fx * i[y0, x0 + 1])
            + fy * ((1 - fx) * i[y0 + 1, x0] + fx * i[y0 + 1, x0 + 1]))


def _sample_window(img: np.ndarray, cx: float, cy: float, half: int,
                   margin: float = 0.0) -> np.ndarray:
    h, w = img.shape
    if (cx - half - margin < 0 or cy - half - margin < 0
            or cx + half + margin > w - 2 or cy + half + margin > h - 2):
        raise KltOutOfBoundsError(
            f"window at ({cx:.2f}, {cy:.2f}) leaves the image")
    off = np.arange(-half, half + 1, dtype=np.float64)
    xs, ys = np.meshgrid(cx + off, cy + off)
    return _bilinear(img, xs, ys)


def template_gradients(prev: np.ndarray, x: float, y: float,
                       half: int) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients of the bilinearly sampled template."""
    gx = 0.5 * (_sample_window(prev, x + 1, y, half) -
                _sample_window(prev, x - 1, y, half))
    gy = 0.5 * (_sample_window(prev, x, y + 1, half) -
                _sample_window(prev, x, y - 1, half))
    return gx, gy


def bilinear_gradients(img: np.ndarray, cx: float, cy: float,
                       half: int) -> tuple[np.ndarray, np.ndarray]:
    """Analytic spatial gradients of the bilinear interpolant at the window
    sample positions (piecewise linear: constant slope inside each cell)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if (cx - half < 0 or cy - half < 0
            or cx + half > w - 2 or cy + half > h - 2):
        raise KltOutOfBoundsError(
            f"window at ({cx:.2f}, {cy:.2f}) leaves the image")
    off = np.arange(-half, half + 1, dtype=np.float64)
    xs, ys = np.meshgrid(cx + off, cy + off)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    gx = ((1 - fy) * (img[y0, x0 + 1] - img[y0, x0])
          + fy * (img[y0 + 1, x0 + 1] - img[y0 + 1, x0]))
    gy = ((1 - fx) * (img[y0 + 1, x0] - img[y0, x0])
          + fx * (img[y0 + 1, x0 + 1] - img[y0, x0 + 1]))
    return gx, gy


def template_hessian(gx: np.ndarray, gy: np.ndarray,
                     min_eigen: float) -> np.ndarray:
    """Per-pixel-normalized 2x2 gradient Hessian and its inverse check.

    Returns the inverse of the unnormalized Hessian; raises
    SingularHessianError when the normalized smaller eigenvalue is below
    ``min_eigen`` (flat or single-gradient-direction patches).
    """
    n = gx.size
    hxx = float((gx * gx).sum()) / n
    hxy = float((gx * gy).sum()) / n
    hyy = float((gy * gy).sum()) / n
    tr, det = hxx + hyy, hxx * hyy - hxy * hxy
    lam_min = 0.5 * tr - np.sqrt(max(0.0, 0.25 * tr * tr - det))
    if lam_min < min_eigen:
        raise SingularHessianError(
            f"smallest Hessian eigenvalue {lam_min:.3g} below {min_eigen:.3g}")
    return np.array([[hyy, -hxy], [-hxy, hxx]]) / (det * n)


def _track_single_level(prev: np.ndarray, nxt: np.ndarray, x: float, y: float,
                        cfg: KltConfig, dx0: float = 0.0,
                        dy0: float = 0.0) -> KltResult:
    half = cfg.window // 2
    try:
        template = _sample_window(prev, x, y, half)
        gx, gy = template_gradients(prev, x, y, half)
    except KltOutOfBoundsError:
        return KltResult(x, y, False, 0, float("inf"), error="oob")

    try:
        h_inv = template_hessian(gx, gy, cfg.min_eigen)
    except SingularHessianError:
        return KltResult(x, y, False, 0, float("inf"), error="singular")

    cx, cy = x + dx0, y + dy0
    residual = float("inf")
    for it in range(1, cfg.max_iters + 1):
        try:
            window = _sample_window(nxt, cx, cy, half)
        except KltOutOfBoundsError:
            return KltResult(cx, cy, False, it, residual, error="oob")
        err = window - template
        residual = float(np.mean(err * err))
        b = np.array([float((gx * err).sum()), float((gy * err).sum())])
        step = h_inv @ b
        # Inverse compositional update: the warp increment is inverted and
        # composed, which for pure translation is a subtraction.
        cx -= step[0]
        cy -= step[1]
        if np.hypot(step[0], step[1]) < cfg.eps:
            try:
                final = _sample_window(nxt, cx, cy, half)
                residual = float(np.mean((final - template) ** 2))
            except KltOutOfBoundsError:
                pass
            return KltResult(cx, cy, True, it, residual)
    return KltResult(cx, cy, False, cfg.max_iters, residual)


def klt_track_point(prev: np.ndarray, nxt: np.ndarray, x: float, y: float,
                    cfg: KltConfig | None = None) -> KltResult:
    """Track one point from ``prev`` to ``nxt``."""
    cfg = cfg or KltConfig()
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if cfg.pyramid_levels <= 1:
        return _track_single_level(prev, nxt, x, y, cfg)

    prevs, nxts = [prev], [nxt]
    for _ in range(cfg.pyramid_levels - 1):
        if min(prevs[-1].shape) < 2 * cfg.window:
            break
        prevs.append(downsample2(np.clip(prevs[-1], 0, 255).astype(np.uint8))
                     .astype(np.float64))
        nxts.append(downsample2(np.clip(nxts[-1], 0, 255).astype(np.uint8))
                    .astype(np.float64))
    dx = dy = 0.0
    res = None
    for lvl in range(len(prevs) - 1, -1, -1):
        s = float(2 ** lvl)
        res = _track_single_level(prevs[lvl], nxts[lvl], x / s, y / s, cfg,
                                  dx0=dx, dy0=dy)
        if res.error is None:
            dx, dy = res.x - x / s, res.y - y / s
        # Displacement carries to the next finer level at double scale.
        if lvl > 0:
            dx, dy = 2 * dx, 2 * dy
    if res.error is not None:
        return KltResult(x, y, False, res.iterations, res.residual, error=res.error)
    return res


def klt_track_frame(prev: np.ndarray, nxt: np.ndarray, points,
                    cfg: KltConfig | None = None) -> list[KltResult]:
    """Independent per-point tracking; per-point failures never abort the
    batch and order is preserved."""
    cfg = cfg or KltConfig()
    return [klt_track_point(prev, nxt, float(px), float(py), cfg)
            for px, py in points]


def klt_sequence(frames, points, cfg: KltConfig | None = None):
    """Track the frame-0 ``points`` through the whole sequence and emit the
    shared tracklog row schema (score and combination columns empty).

    A point that fails to converge, loses its window, or hits a singular
    Hessian is recorded Lost at that frame and dropped from later frames.
    """
    from .tracker import ACTIVE, LOST, TrackRow

    cfg = cfg or KltConfig()
    it = iter(frames)
    prev = np.asarray(next(it), dtype=np.float64)
    state = [[float(px), float(py), True] for px, py in points]
    rows = [TrackRow(i, 0, x, y, ACTIVE, None, None, None)
            for i, (x, y, _) in enumerate(state)]
    for frame_idx, nxt in enumerate(it, start=1):
        nxt = np.asarray(nxt, dtype=np.float64)
        for tid, s in enumerate(state):
            if not s[2]:
                continue
            res = klt_track_point(prev, nxt, s[0], s[1], cfg)
            if res.error is None and res.converged:
                s[0], s[1] = res.x, res.y
                rows.append(TrackRow(tid, frame_idx, res.x, res.y, ACTIVE,
                                     None, None, None))
            else:
                s[2] = False
                rows.append(TrackRow(tid, frame_idx, s[0], s[1], LOST,
                                     None, None, None))
        prev = nxt
    return rows
