import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from boundarytrack import imgcore
from boundarytrack.imgcore import (EmptyMaskError, ImageError, OutOfBoundsError,
                                   Rect, TooSmallError, as_gray, crop,
                                   distance_transform, downsample2, load_pgm,
                                   save_pgm)

images = hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2,
                                               min_side=1, max_side=32))


# ---------------------------------------------------------------------------
# Rect

class TestRect:
    def test_extent_must_be_positive(self):
        with pytest.raises(ValueError):
            Rect(0, 0, 0, 5)
        with pytest.raises(ValueError):
            Rect(0, 0, 5, -1)

    def test_edges_and_center(self):
        r = Rect(2, 3, 4, 5)
        assert (r.x1, r.y1) == (6, 8)
        assert r.center == (3.5, 5.0)

    @given(st.integers(-40, 40), st.integers(-40, 40),
           st.integers(1, 40), st.integers(1, 40),
           st.integers(1, 50), st.integers(1, 50))
    def test_clamped_is_the_intersection(self, x0, y0, w, h, iw, ih):
        r = Rect(x0, y0, w, h)
        c = r.clamped(iw, ih)
        expect = {(x, y) for y in range(max(y0, 0), min(y0 + h, ih))
                  for x in range(max(x0, 0), min(x0 + w, iw))}
        if c is None:
            assert expect == set()
        else:
            got = {(x, y) for y in range(c.y0, c.y1) for x in range(c.x0, c.x1)}
            assert got == expect

    @given(st.integers(-20, 20), st.integers(-20, 20),
           st.integers(1, 20), st.integers(1, 20),
           st.integers(-20, 20), st.integers(-20, 20),
           st.integers(1, 20), st.integers(1, 20))
    def test_intersects_matches_pixel_overlap(self, ax, ay, aw, ah,
                                              bx, by, bw, bh):
        a, b = Rect(ax, ay, aw, ah), Rect(bx, by, bw, bh)
        overlap = (max(ax, bx) < min(ax + aw, bx + bw)
                   and max(ay, by) < min(ay + ah, by + bh))
        assert a.intersects(b) == overlap == b.intersects(a)


# ---------------------------------------------------------------------------
# as_gray

class TestAsGray:
    def test_accepts_uint8(self):
        img = np.zeros((3, 4), dtype=np.uint8)
        assert as_gray(img).dtype == np.uint8

    def test_converts_small_ints(self):
        out = as_gray(np.array([[0, 255]], dtype=np.int64))
        assert out.dtype == np.uint8

    def test_rejects_out_of_range_ints(self):
        with pytest.raises(ImageError):
            as_gray(np.array([[300]]))

    def test_rejects_floats_and_wrong_ndim(self):
        with pytest.raises(ImageError):
            as_gray(np.zeros((3, 3), dtype=np.float64))
        with pytest.raises(ImageError):
            as_gray(np.zeros((3, 3, 3), dtype=np.uint8))


# ---------------------------------------------------------------------------
# distance_transform: brute-force oracle

def brute_distance(mask):
    ys, xs = np.nonzero(mask)
    h, w = mask.shape
    gy, gx = np.mgrid[0:h, 0:w]
    d = np.sqrt((gx[..., None] - xs) ** 2 + (gy[..., None] - ys) ** 2)
    return d.min(axis=-1)


class TestDistanceTransform:
    def test_matches_brute_force_on_random_masks(self, rng):
        for _ in range(25):
            mask = rng.random((rng.integers(1, 12), rng.integers(1, 12))) < 0.3
            if not mask.any():
                mask[0, 0] = True
            got = distance_transform(mask)
            np.testing.assert_allclose(got, brute_distance(mask), atol=1e-9)

    def test_zero_exactly_on_set_pixels(self, rng):
        mask = rng.random((9, 9)) < 0.4
        mask[4, 4] = True
        d = distance_transform(mask)
        assert (d[mask] == 0).all()
        assert (d[~mask] > 0).all()

    def test_empty_mask_raises(self):
        with pytest.raises(EmptyMaskError):
            distance_transform(np.zeros((4, 4), dtype=bool))


# ---------------------------------------------------------------------------
# downsample2

class TestDownsample2:
    @given(images.filter(lambda a: a.shape[0] >= 2 and a.shape[1] >= 2))
    def test_matches_block_mean_oracle(self, img):
        out = downsample2(img)
        h, w = img.shape
        assert out.shape == (-(-h // 2), -(-w // 2))
        for by in range(out.shape[0]):
            for bx in range(out.shape[1]):
                block = img[2 * by:2 * by + 2, 2 * bx:2 * bx + 2].astype(int)
                assert out[by, bx] == block.sum() // block.size

    def test_too_small(self):
        with pytest.raises(TooSmallError):
            downsample2(np.zeros((1, 5), dtype=np.uint8))


# ---------------------------------------------------------------------------
# crop

class TestCrop:
    def test_returns_window_and_effective_rect(self, rng):
        img = rng.integers(0, 256, (10, 12), dtype=np.uint8)
        win, eff = crop(img, Rect(-2, 3, 6, 20))
        assert eff == Rect(0, 3, 4, 7)
        np.testing.assert_array_equal(win, img[3:10, 0:4])

    def test_disjoint_rect_raises(self):
        with pytest.raises(OutOfBoundsError):
            crop(np.zeros((5, 5), dtype=np.uint8), Rect(10, 10, 3, 3))


# ---------------------------------------------------------------------------
# PGM I/O

class TestPgm:
    @given(images)
    def test_round_trip(self, img):
        import tempfile
        with tempfile.TemporaryDirectory() as d:
            p = f"{d}/img.pgm"
            save_pgm(p, img)
            np.testing.assert_array_equal(load_pgm(p), img)

    def test_rejects_non_pgm(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
        with pytest.raises(ImageError):
            load_pgm(p)

    def test_rejects_wrong_maxval(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(ImageError):
            load_pgm(p)

    def test_rejects_truncated_payload(self, tmp_path):
        p = tmp_path / "short.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
        with pytest.raises(ImageError):
            load_pgm(p)

    def test_comment_header(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# a comment\n2 1\n255\n\x05\x07")
        np.testing.assert_array_equal(load_pgm(p), [[5, 7]])

    def test_load_image_dispatches_pgm(self, tmp_path, rng):
        img = rng.integers(0, 256, (6, 7), dtype=np.uint8)
        p = tmp_path / "x.pgm"
        save_pgm(p, img)
        np.testing.assert_array_equal(imgcore.load_image(p), img)
