import numpy as np
import pytest

from boundarytrack import chamfer
from boundarytrack.chamfer import (ChamferError, EdgePyramidStack,
                                   EmptyEdgesError, EmptyTemplateError,
                                   TooManyLevelsError, brute_force_match,
                                   build_edge_pyramid, chamfer_score,
                                   default_num_levels, hierarchical_match,
                                   hierarchical_match_stack, level_threshold)
from boundarytrack.imgcore import Rect

from oracles import chamfer_score_direct


def random_template(rng, n=20, span=12):
    """A connected random-walk point chain, like a level-line arc."""
    pts = [np.zeros(2, dtype=np.int64)]
    for _ in range(n - 1):
        step = rng.integers(-1, 2, 2)
        pts.append(np.clip(pts[-1] + step, -span, span))
    return np.array(pts)


def random_edges(rng, w, h, n=60):
    return np.stack([rng.integers(0, w, n), rng.integers(0, h, n)], axis=1)


class TestScore:
    def test_matches_direct_nearest_distance(self, rng):
        for _ in range(10):
            edges = random_edges(rng, 32, 32, 40)
            pyr = build_edge_pyramid(edges, (32, 32), 1)
            field = pyr.level(0)
            tmpl = random_template(rng, 10, 6)
            for _ in range(5):
                dx, dy = int(rng.integers(-4, 36)), int(rng.integers(-4, 36))
                want = chamfer_score_direct(tmpl, edges, dx, dy)
                assert chamfer_score(tmpl, field, dx, dy) == pytest.approx(
                    want, abs=1e-9)

    def test_zero_when_template_lies_on_edges(self):
        edges = np.array([[3, 3], [4, 3], [5, 3]])
        field = build_edge_pyramid(edges, (16, 16), 1).level(0)
        tmpl = np.array([[0, 0], [1, 0], [2, 0]])
        assert chamfer_score(tmpl, field, 3, 3) == 0.0

    def test_empty_template_raises(self):
        field = build_edge_pyramid(np.array([[1, 1]]), (8, 8), 1).level(0)
        with pytest.raises(EmptyTemplateError):
            chamfer_score(np.empty((0, 2)), field, 0, 0)


class TestPyramid:
    def test_level_shapes_halve(self):
        pyr = build_edge_pyramid(np.array([[0, 0], [63, 63]]), (64, 64), 4)
        assert [pyr.level(k).shape for k in range(4)] == \
            [(64, 64), (32, 32), (16, 16), (8, 8)]

    def test_coarse_level_too_small_raises(self):
        with pytest.raises(TooManyLevelsError):
            build_edge_pyramid(np.array([[0, 0]]), (16, 16), 3)

    def test_empty_edges_raise(self):
        with pytest.raises(EmptyEdgesError):
            build_edge_pyramid(np.empty((0, 2)), (16, 16), 1)

    def test_default_num_levels(self):
        assert default_num_levels(64, 64) == 4
        assert default_num_levels(41, 41) == 3
        assert default_num_levels(8, 8) == 1
        assert default_num_levels(15, 64) == 1
        assert default_num_levels(16, 64) == 2

    def test_stack_requires_matching_dims(self):
        a = build_edge_pyramid(np.array([[1, 1]]), (16, 16), 1)
        b = build_edge_pyramid(np.array([[1, 1]]), (16, 8), 1)
        with pytest.raises(ChamferError):
            EdgePyramidStack([a, b])
        with pytest.raises(EmptyEdgesError):
            EdgePyramidStack([])


class TestLevelThreshold:
    def test_level_zero_is_the_accept_threshold(self):
        assert level_threshold(2.5, 0) == 2.5

    def test_coarser_levels_shrink_plus_slack(self):
        assert level_threshold(4.0, 1) == 2.0 + chamfer.COARSE_SLACK
        assert level_threshold(4.0, 2) == 1.0 + chamfer.COARSE_SLACK

    def test_slack_covers_projection_error(self):
        assert chamfer.COARSE_SLACK >= 2 * np.sqrt(2)


class TestHierarchicalVsBruteForce:
    def test_bit_equal_results_random_pairs(self, rng):
        search = Rect(0, 0, 64, 64)
        for _ in range(30):
            edges = random_edges(rng, 64, 64, int(rng.integers(5, 120)))
            tmpl = random_template(rng, int(rng.integers(3, 30)))
            thr = float(rng.uniform(0.5, 4.0))
            levels = default_num_levels(64, 64)
            pyr = build_edge_pyramid(edges, (64, 64), levels)
            hier = hierarchical_match(tmpl, pyr, search, thr)
            brute = brute_force_match(tmpl, pyr.level(0), search, thr)
            assert hier == brute  # same offsets, same order, bit-equal scores

    def test_global_minimum_always_returned(self, rng):
        search = Rect(0, 0, 64, 64)
        for _ in range(10):
            edges = random_edges(rng, 64, 64, 50)
            tmpl = random_template(rng, 12)
            pyr = build_edge_pyramid(edges, (64, 64), 4)
            field = pyr.level(0)
            all_scores = brute_force_match(tmpl, field, search, np.inf)
            best = all_scores[0]
            got = hierarchical_match(tmpl, pyr, search, best.score + 1e-9)
            assert got and got[0] == best

    def test_scores_in_results_match_chamfer_score(self, rng):
        edges = random_edges(rng, 64, 64, 40)
        tmpl = random_template(rng, 15)
        pyr = build_edge_pyramid(edges, (64, 64), 4)
        for m in hierarchical_match(tmpl, pyr, Rect(0, 0, 64, 64), 3.0):
            assert m.score == chamfer_score(tmpl, pyr.level(0), m.dx, m.dy)

    def test_restricted_search_rect(self, rng):
        edges = random_edges(rng, 64, 64, 60)
        tmpl = random_template(rng, 10)
        pyr = build_edge_pyramid(edges, (64, 64), 4)
        search = Rect(10, 17, 21, 13)
        hier = hierarchical_match(tmpl, pyr, search, 3.0)
        brute = brute_force_match(tmpl, pyr.level(0), search, 3.0)
        assert hier == brute
        for m in hier:
            assert search.contains(m.dx, m.dy)


class TestStackMatcher:
    def test_bit_equal_to_per_candidate_matching(self, rng):
        for _ in range(10):
            n_cand = int(rng.integers(1, 6))
            pyrs = [build_edge_pyramid(random_edges(rng, 64, 64,
                                                    int(rng.integers(5, 80))),
                                       (64, 64), 4) for _ in range(n_cand)]
            stack = EdgePyramidStack(pyrs)
            tmpl = random_template(rng, 14)
            search = Rect(4, 2, 50, 55)
            thr = float(rng.uniform(0.5, 3.0))
            got = hierarchical_match_stack(tmpl, stack, range(n_cand),
                                           search, thr, 4)
            for ci in range(n_cand):
                want = hierarchical_match(tmpl, pyrs[ci], search, thr)
                assert got[ci] == want

    def test_subset_of_candidates(self, rng):
        pyrs = [build_edge_pyramid(random_edges(rng, 32, 32, 20), (32, 32), 2)
                for _ in range(4)]
        stack = EdgePyramidStack(pyrs)
        tmpl = random_template(rng, 8, 4)
        got = hierarchical_match_stack(tmpl, stack, [1, 3],
                                       Rect(0, 0, 32, 32), 2.0, 2)
        assert set(got) == {1, 3}
        for ci in (1, 3):
            assert got[ci] == hierarchical_match(tmpl, pyrs[ci],
                                                 Rect(0, 0, 32, 32), 2.0)

    def test_empty_candidates(self, rng):
        stack = EdgePyramidStack(
            [build_edge_pyramid(random_edges(rng, 32, 32, 20), (32, 32), 2)])
        assert hierarchical_match_stack(random_template(rng, 6), stack, [],
                                        Rect(0, 0, 32, 32), 2.0, 2) == {}
