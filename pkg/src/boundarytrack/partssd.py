"""Part-based SSD verification of support-region sides.

The two sides of a support patch (split by the level line) are matched
independently; with arbitrary A/B labels on either patch this gives four
pairings, and the best (lowest mean squared difference) is reported.  A
pixel-identical object side therefore scores 0 no matter what happens on
the background side.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import Rect, as_gray

COMBINATIONS = ("AA", "AB", "BA", "BB")
FULL_PATCH = "FULL"

DEFAULT_MIN_OVERLAP = 40


class PartSsdError(Exception):
    pass


class InsufficientOverlapError(PartSsdError):
    pass


class NoValidCombinationError(PartSsdError):
    pass


@dataclass
class SupportPatch:
    """A support window around a point plus its two-sided split.

    ``pixels`` is always patch_size x patch_size; near the image border the
    out-of-image cells are marked invalid and belong to neither side.
    """

    pixels: np.ndarray            # float64, (s, s)
    side_a: np.ndarray            # bool, (s, s)
    side_b: np.ndarray            # bool, (s, s)
    valid: np.ndarray             # bool, (s, s)
    center: tuple[int, int]       # source-frame coordinates
    rect: Rect                    # effective in-image rect
    degenerate: bool = False      # one side under the minimum pixel count

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    def side(self, label: str) -> np.ndarray:
        return self.side_a if label == "A" else self.side_b


def extract_support_patch(img: np.ndarray, cx: int, cy: int, size: int,
                          side_a: np.ndarray, side_b: np.ndarray,
                          valid: np.ndarray, rect: Rect,
                          degenerate: bool = False) -> SupportPatch:
    """Cut the intensity patch for precomputed side masks."""
    img = as_gray(img)
    half = size // 2
    pix = np.zeros((size, size), dtype=np.float64)
    pix[rect.y0 - (cy - half):rect.y1 - (cy - half),
        rect.x0 - (cx - half):rect.x1 - (cx - half)] = (
            img[rect.y0:rect.y1, rect.x0:rect.x1])
    return SupportPatch(pixels=pix, side_a=side_a, side_b=side_b, valid=valid,
                        center=(cx, cy), rect=rect, degenerate=degenerate)


@dataclass(frozen=True)
class PartMatchResult:
    combination: str              # one of COMBINATIONS, or FULL on fallback
    score: float                  # mean squared intensity difference
    overlap: int                  # pixels used


def masked_ssd(p: SupportPatch, p_side: str, q: SupportPatch, q_side: str,
               min_overlap: int = DEFAULT_MIN_OVERLAP) -> tuple[float, int]:
    """Mean squared difference over the overlap of two side masks (patches
    aligned on their centers)."""
    m = p.side(p_side) & q.side(q_side)
    n = int(m.sum())
    if n < min_overlap:
        raise InsufficientOverlapError(f"overlap {n} below {min_overlap}")
    d = p.pixels[m] - q.pixels[m]
    return float(np.mean(d * d)), n


def full_patch_ssd(p: SupportPatch, q: SupportPatch) -> tuple[float, int]:
    """Mean SSD over all mutually valid pixels; fallback for degenerate
    splits and the baseline the part matching is compared against."""
    m = p.valid & q.valid
    n = int(m.sum())
    if n == 0:
        raise InsufficientOverlapError("patches share no valid pixels")
    d = p.pixels[m] - q.pixels[m]
    return float(np.mean(d * d)), n


def part_ssd_match(p: SupportPatch, q: SupportPatch,
                   min_overlap: int = DEFAULT_MIN_OVERLAP) -> PartMatchResult:
    """Best of the four side pairings; ties go to the earliest pairing in
    AA < AB < BA < BB order.  Degenerate patches fall back to full-patch SSD."""
    if p.degenerate or q.degenerate:
        score, n = full_patch_ssd(p, q)
        return PartMatchResult(combination=FULL_PATCH, score=score, overlap=n)
    best = None
    for combo in COMBINATIONS:
        try:
            score, n = masked_ssd(p, combo[0], q, combo[1], min_overlap)
        except InsufficientOverlapError:
            continue
        if best is None or score < best.score:
            best = PartMatchResult(combination=combo, score=score, overlap=n)
    if best is None:
        raise NoValidCombinationError("all four pairings lack overlap")
    return best


def verify_candidates(corner_patch: SupportPatch, candidates,
                      ssd_threshold: float,
                      min_overlap: int = DEFAULT_MIN_OVERLAP):
    """Pick the candidate with the lowest part-SSD score.

    ``candidates`` is a sequence of SupportPatch (ordered by chamfer score);
    the part-SSD score alone decides the winner.  Returns
    (index, PartMatchResult) or None when nothing clears the threshold.
    """
    best_idx = None
    best: PartMatchResult | None = None
    for i, cand in enumerate(candidates):
        try:
            r = part_ssd_match(corner_patch, cand, min_overlap)
        except NoValidCombinationError:
            continue
        if best is None or r.score < best.score:
            best, best_idx = r, i
    if best is None or best.score > ssd_threshold:
        return None
    return best_idx, best
