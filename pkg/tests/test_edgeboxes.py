"""Edge detection, contour grouping, box scoring, candidates, NMS."""

from __future__ import annotations

import math

import numpy as np
import pytest

from proposalbench.core import BoundingBox, ImageBuffer, ParameterError, ScoredBox, iou
from proposalbench.edgeboxes import (
    BoxScorer,
    EdgeBoxParams,
    EdgeGroup,
    EdgeMap,
    compute_affinities,
    detect_edges,
    edgeboxes,
    generate_candidates,
    group_affinity,
    group_edges,
    nms,
    score_box,
    _nms_kernel,
)


def buf(arr) -> ImageBuffer:
    return ImageBuffer(np.asarray(arr, dtype=np.uint8))


def square_contour_image():
    """White 20x20 with a 6x6 dark square outline at (7, 7)."""
    arr = np.full((20, 20, 3), 255, np.uint8)
    arr[7, 7:13] = 0
    arr[12, 7:13] = 0
    arr[7:13, 7] = 0
    arr[7:13, 12] = 0
    return buf(arr)


def mk_group(gid, pixels, pos, theta, mass):
    return EdgeGroup(id=gid, pixels=tuple(pixels), mean_position=pos,
                     mean_orientation=theta, mass=mass)


# ---------------------------------------------------------------------------
# Edge detection
# ---------------------------------------------------------------------------

class TestDetectEdges:
    def test_constant_image_all_zero(self):
        em = detect_edges(buf(np.full((8, 8, 3), 123)))
        assert np.all(em.magnitude == 0.0)

    def test_vertical_step_fixture(self):
        arr = np.zeros((5, 5, 3), np.uint8)
        arr[:, 2:] = 255
        em = detect_edges(buf(arr))
        # hand Sobel: columns 1 and 2 see the full 255 jump, rest see none
        assert np.all(em.magnitude[:, 1] == 1.0)
        assert np.all(em.magnitude[:, 2] == 1.0)
        assert np.all(em.magnitude[:, [0, 3, 4]] == 0.0)
        # gradient is horizontal, so orientation is 0 mod pi
        assert np.all(em.orientation[:, 1:3] == 0.0)

    def test_max_is_one_whenever_nonzero(self):
        rng = np.random.default_rng(9)
        arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        em = detect_edges(buf(arr))
        assert em.magnitude.max() == 1.0

    def test_threshold_zeroes_weak_edges(self):
        arr = np.full((9, 12, 3), 100, np.uint8)
        arr[:, 6:] = 255      # strong step
        arr[:, 3:] += 1       # weak step at column 3 (1/155 of the strong one)
        em = detect_edges(buf(arr))
        assert np.all(em.magnitude[:, 2:4] == 0.0)
        assert em.magnitude[4, 5] > 0.0

    def test_edge_map_validation(self):
        with pytest.raises(ParameterError):
            EdgeMap(np.full((4, 4), 2.0), np.zeros((4, 4)))
        with pytest.raises(ParameterError):
            EdgeMap(np.zeros((4, 4)), np.full((4, 4), np.pi))
        with pytest.raises(ParameterError):
            EdgeMap(np.zeros((4, 4)), np.zeros((4, 5)))


# ---------------------------------------------------------------------------
# Grouping
# ---------------------------------------------------------------------------

class TestGroupEdges:
    def test_empty_map_no_groups(self):
        em = detect_edges(buf(np.full((10, 10, 3), 50)))
        assert group_edges(em) == []

    def test_straight_step_edge_is_one_group(self):
        arr = np.full((8, 10, 3), 255, np.uint8)
        arr[4:] = 0
        em = detect_edges(buf(arr))
        groups = group_edges(em)
        assert len(groups) == 1
        g = groups[0]
        # both response rows, full width
        assert set(g.pixels) == {(x, y) for x in range(10) for y in (3, 4)}
        assert g.mean_orientation == pytest.approx(math.pi / 2)
        assert g.mass == pytest.approx(em.magnitude.sum())

    def test_l_shaped_contour_splits_at_corner(self):
        arr = np.full((24, 24, 3), 255, np.uint8)
        arr[5:15, 5] = 0    # vertical arm, 10 px
        arr[14, 5:15] = 0   # horizontal arm, 10 px
        groups = group_edges(detect_edges(buf(arr)))
        assert len(groups) >= 2

    def test_groups_partition_nonzero_pixels(self):
        rng = np.random.default_rng(31)
        arr = rng.integers(0, 256, size=(18, 18, 3), dtype=np.uint8)
        em = detect_edges(buf(arr))
        groups = group_edges(em)
        seen = {}
        for g in groups:
            for p in g.pixels:
                assert p not in seen, "pixel claimed by two groups"
                seen[p] = g.id
        nz = {(int(x), int(y)) for y, x in zip(*np.nonzero(em.magnitude > 0))}
        assert set(seen) == nz

    def test_groups_are_8_connected(self):
        rng = np.random.default_rng(37)
        arr = rng.integers(0, 256, size=(15, 15, 3), dtype=np.uint8)
        groups = group_edges(detect_edges(buf(arr)))
        for g in groups:
            pts = set(g.pixels)
            frontier = {g.pixels[0]}
            reached = set(frontier)
            while frontier:
                cx, cy = frontier.pop()
                for dx in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        q = (cx + dx, cy + dy)
                        if q in pts and q not in reached:
                            reached.add(q)
                            frontier.add(q)
            assert reached == pts

    def test_deterministic(self):
        rng = np.random.default_rng(41)
        arr = rng.integers(0, 256, size=(14, 14, 3), dtype=np.uint8)
        em = detect_edges(buf(arr))
        assert group_edges(em) == group_edges(em)


# ---------------------------------------------------------------------------
# Affinity
# ---------------------------------------------------------------------------

class TestGroupAffinity:
    def test_collinear_groups_score_one(self):
        a = mk_group(0, [(2, 2)], (2.0, 2.0), 0.0, 1.0)
        b = mk_group(1, [(4, 2)], (3.5, 2.0), 0.0, 1.0)
        assert group_affinity(a, b) == 1.0

    def test_perpendicular_orientation_scores_zero(self):
        a = mk_group(0, [(2, 2)], (2.0, 2.0), math.pi / 2, 1.0)
        b = mk_group(1, [(4, 2)], (3.5, 2.0), 0.0, 1.0)
        assert group_affinity(a, b) == pytest.approx(0.0, abs=1e-20)

    def test_beyond_radius_scores_zero(self):
        a = mk_group(0, [(0, 0)], (0.0, 0.0), 0.0, 1.0)
        b = mk_group(1, [(5, 0)], (5.0, 0.0), 0.0, 1.0)
        assert group_affinity(a, b) == 0.0

    def test_exactly_symmetric(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            a = mk_group(0, [(0, 0)], tuple(rng.uniform(0, 4, 2)), rng.uniform(0, math.pi), 1.0)
            b = mk_group(1, [(1, 1)], tuple(rng.uniform(0, 4, 2)), rng.uniform(0, math.pi), 1.0)
            assert group_affinity(a, b) == group_affinity(b, a)

    def test_compute_affinities_keys_and_radius(self):
        groups = [
            mk_group(0, [(0, 0)], (0.0, 0.0), 0.0, 1.0),
            mk_group(1, [(1, 0)], (1.0, 0.0), 0.0, 1.0),
            mk_group(2, [(9, 9)], (9.0, 9.0), 0.0, 1.0),
        ]
        aff = compute_affinities(groups)
        assert set(aff) == {(0, 1)}
        assert aff[(0, 1)] == 1.0


# ---------------------------------------------------------------------------
# Box scoring
# ---------------------------------------------------------------------------

class TestScoreBox:
    def test_blank_image_scores_zero_everywhere(self):
        img = buf(np.full((20, 20, 3), 200))
        groups = group_edges(detect_edges(img))
        assert groups == []
        assert score_box(BoundingBox(2, 2, 10, 10), groups, {}) == 0.0

    def test_enclosed_square_scores_total_mass_over_perimeter(self):
        img = square_contour_image()
        groups = group_edges(detect_edges(img))
        aff = compute_affinities(groups)
        box = BoundingBox(4, 4, 12, 12)
        want = sum(g.mass for g in groups) / (2.0 * (12 + 12)) ** 1.5
        assert score_box(box, groups, aff) == want

    def test_straddling_scores_strictly_lower(self):
        img = square_contour_image()
        groups = group_edges(detect_edges(img))
        aff = compute_affinities(groups)
        enclosed = score_box(BoundingBox(4, 4, 12, 12), groups, aff)
        straddled = score_box(BoundingBox(7, 4, 12, 12), groups, aff)
        assert 0.0 <= straddled < enclosed

    def test_touching_the_boundary_zeroes_a_group(self):
        # group hugging the box's perimeter pixels counts as boundary contact
        g = mk_group(0, [(3, 3), (4, 3)], (3.5, 3.0), 0.0, 2.0)
        box_touch = BoundingBox(3, 3, 8, 8)
        box_clear = BoundingBox(2, 2, 8, 8)
        assert score_box(box_touch, [g], {}) == 0.0
        assert score_box(box_clear, [g], {}) == 2.0 / (2.0 * 16) ** 1.5

    def test_direct_chain_discount(self):
        inner = mk_group(0, [(5, 5), (6, 5)], (5.5, 5.0), 0.0, 3.0)
        crossing = mk_group(1, [(7, 5), (12, 5)], (7.0, 5.0), 0.0, 5.0)
        box = BoundingBox(2, 2, 9, 9)  # interior columns 3..9: crossing leaks out
        aff = {(0, 1): 0.5}
        got = score_box(box, [inner, crossing], aff)
        assert got == (1.0 - 0.5) * 3.0 / (2.0 * 18) ** 1.5

    def test_two_hop_chain_multiplies(self):
        g0 = mk_group(0, [(5, 5)], (5.0, 5.0), 0.0, 2.0)
        g1 = mk_group(1, [(6, 5)], (6.0, 5.0), 0.0, 2.0)
        out = mk_group(2, [(7, 5), (12, 5)], (7.0, 5.0), 0.0, 2.0)
        box = BoundingBox(2, 2, 9, 9)
        aff = {(0, 1): 0.8, (1, 2): 0.6}
        got0 = score_box(box, [g0, g1, out], aff)
        w0 = 1.0 - 0.8 * 0.6
        w1 = 1.0 - 0.6
        assert got0 == (w0 * 2.0 + w1 * 2.0) / (2.0 * 18) ** 1.5

    def test_chain_below_cutoff_ignored(self):
        g0 = mk_group(0, [(5, 5)], (5.0, 5.0), 0.0, 2.0)
        out = mk_group(1, [(7, 5), (12, 5)], (7.0, 5.0), 0.0, 2.0)
        box = BoundingBox(2, 2, 9, 9)
        got = score_box(box, [g0, out], {(0, 1): 0.04})
        assert got == 2.0 / (2.0 * 18) ** 1.5  # full weight: 0.04 <= 0.05 cutoff

    def test_degenerate_interior_scores_zero(self):
        g = mk_group(0, [(5, 5)], (5.0, 5.0), 0.0, 1.0)
        assert score_box(BoundingBox(4, 4, 2, 6), [g], {}) == 0.0

    def test_translation_equivariance(self):
        base = np.full((20, 20, 3), 255, np.uint8)
        base[7, 7:13] = 0
        base[12, 7:13] = 0
        base[7:13, 7] = 0
        base[7:13, 12] = 0
        # the same contour moved by (+3, +2)
        shifted = np.full((20, 20, 3), 255, np.uint8)
        shifted[9, 10:16] = 0
        shifted[14, 10:16] = 0
        shifted[9:15, 10] = 0
        shifted[9:15, 15] = 0
        g1 = group_edges(detect_edges(buf(base)))
        g2 = group_edges(detect_edges(buf(shifted)))
        a1 = compute_affinities(g1)
        a2 = compute_affinities(g2)
        s1 = score_box(BoundingBox(4, 4, 12, 12), g1, a1)
        s2 = score_box(BoundingBox(7, 6, 12, 12), g2, a2)
        assert s2 == pytest.approx(s1, abs=1e-9)

    def test_mass_linearity_preserves_ranking(self):
        img = square_contour_image()
        groups = group_edges(detect_edges(img))
        aff = compute_affinities(groups)
        scaled = [
            mk_group(g.id, g.pixels, g.mean_position, g.mean_orientation, g.mass * 3.0)
            for g in groups
        ]
        boxes = [BoundingBox(4, 4, 12, 12), BoundingBox(5, 5, 10, 10), BoundingBox(7, 4, 12, 12)]
        plain = [score_box(b, groups, aff) for b in boxes]
        tripled = [score_box(b, scaled, aff) for b in boxes]
        for p, t in zip(plain, tripled):
            assert t == pytest.approx(3.0 * p, rel=1e-12)
        assert np.argsort(plain).tolist() == np.argsort(tripled).tolist()


class TestBatchScorerBitCompat:
    def test_batch_equals_reference_on_noise(self):
        rng = np.random.default_rng(17)
        for seed in range(3):
            arr = rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)
            img = buf(arr)
            groups = group_edges(detect_edges(img))
            aff = compute_affinities(groups)
            scorer = BoxScorer(img)
            boxes = generate_candidates(24, 24)[::7]
            batch = scorer.scores(boxes)
            for b, got in zip(boxes, batch):
                assert got == score_box(b, groups, aff), b

    def test_batch_equals_reference_on_structured_fixture(self):
        img = square_contour_image()
        groups = group_edges(detect_edges(img))
        aff = compute_affinities(groups)
        scorer = BoxScorer(img)
        boxes = [
            BoundingBox(4, 4, 12, 12),
            BoundingBox(7, 4, 12, 12),
            BoundingBox(0, 0, 20, 20),
            BoundingBox(6, 6, 8, 8),
            BoundingBox(1, 9, 6, 6),
        ]
        batch = scorer.scores(boxes)
        for b, got in zip(boxes, batch):
            assert got == score_box(b, groups, aff)


# ---------------------------------------------------------------------------
# Candidate generation
# ---------------------------------------------------------------------------

class TestGenerateCandidates:
    def test_all_candidates_inside_image(self):
        for b in generate_candidates(100, 100):
            assert b.x >= 0 and b.y >= 0 and b.x2 <= 100 and b.y2 <= 100

    def test_adjacent_same_scale_overlap_near_alpha(self):
        cands = generate_candidates(100, 100)
        by_shape: dict[tuple[int, int], list[BoundingBox]] = {}
        for b in cands:
            by_shape.setdefault((b.w, b.h), []).append(b)
        checked = 0
        for (w, h), boxes in by_shape.items():
            rows: dict[int, list[BoundingBox]] = {}
            for b in boxes:
                rows.setdefault(b.y, []).append(b)
            for row in rows.values():
                row.sort(key=lambda b: b.x)
                for a, b in zip(row, row[1:]):
                    if b.x - a.x < w:  # neighbours, not wrap-around
                        v = iou(a, b)
                        assert 0.65 - 0.1 <= v <= 0.65 + 0.1, (w, h, a.x, b.x, v)
                        checked += 1
        assert checked > 100

    def test_golden_count_100x100(self):
        assert len(generate_candidates(100, 100)) == 35071

    def test_deterministic_and_duplicate_free(self):
        a = generate_candidates(100, 100)
        b = generate_candidates(100, 100)
        assert a == b
        assert len({bb.as_tuple() for bb in a}) == len(a)

    def test_nonsquare_image(self):
        for b in generate_candidates(64, 48):
            assert b.x2 <= 64 and b.y2 <= 48


# ---------------------------------------------------------------------------
# NMS
# ---------------------------------------------------------------------------

class TestNms:
    def test_single_box(self):
        sb = ScoredBox(BoundingBox(0, 0, 5, 5), 1.0)
        assert nms([sb], 0.75) == [sb]

    def test_identical_boxes_keep_higher_score(self):
        hi = ScoredBox(BoundingBox(0, 0, 5, 5), 0.9)
        lo = ScoredBox(BoundingBox(0, 0, 5, 5), 0.8)
        assert nms([hi, lo], 0.75) == [hi]

    def test_greedy_reinstates_third_box(self):
        a = ScoredBox(BoundingBox(0, 0, 10, 10), 0.9)
        b = ScoredBox(BoundingBox(1, 0, 10, 10), 0.8)   # IoU(a,b) ~ 0.82
        c = ScoredBox(BoundingBox(2, 0, 10, 10), 0.7)   # IoU(b,c) ~ 0.82, IoU(a,c) ~ 0.67
        assert nms([a, b, c], 0.75) == [a, c]

    def test_unsorted_input_rejected(self):
        a = ScoredBox(BoundingBox(0, 0, 5, 5), 0.5)
        b = ScoredBox(BoundingBox(8, 8, 5, 5), 0.9)
        with pytest.raises(ParameterError):
            nms([a, b], 0.75)

    def test_output_pairwise_below_beta(self):
        rng = np.random.default_rng(23)
        boxes = sorted(
            (
                ScoredBox(
                    BoundingBox(int(rng.integers(0, 30)), int(rng.integers(0, 30)),
                                int(rng.integers(3, 20)), int(rng.integers(3, 20))),
                    float(rng.random()),
                )
                for _ in range(60)
            ),
            key=lambda sb: -sb.score,
        )
        kept = nms(boxes, 0.75)
        for i, a in enumerate(kept):
            for b in kept[i + 1 :]:
                assert iou(a.box, b.box) < 0.75

    def test_kernel_matches_public_nms(self):
        rng = np.random.default_rng(29)
        boxes = sorted(
            (
                ScoredBox(
                    BoundingBox(int(rng.integers(0, 40)), int(rng.integers(0, 40)),
                                int(rng.integers(2, 25)), int(rng.integers(2, 25))),
                    float(rng.random()),
                )
                for _ in range(80)
            ),
            key=lambda sb: -sb.score,
        )
        want = nms(boxes, 0.75)
        xs = np.array([sb.box.x for sb in boxes], np.int64)
        ys = np.array([sb.box.y for sb in boxes], np.int64)
        ws = np.array([sb.box.w for sb in boxes], np.int64)
        hs = np.array([sb.box.h for sb in boxes], np.int64)
        kept = _nms_kernel(xs, ys, ws, hs, 0.75, len(boxes))
        assert [boxes[i] for i in kept] == want
        # early-stop limit is a prefix of the unlimited result
        kept5 = _nms_kernel(xs, ys, ws, hs, 0.75, 5)
        assert list(kept5) == list(kept[:5])


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

class TestEdgeboxesPipeline:
    def test_output_capped_and_sorted(self):
        rng = np.random.default_rng(43)
        arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        ps = edgeboxes(buf(arr), EdgeBoxParams(n_boxes=10))
        assert len(ps) <= 10
        scores = [sb.score for sb in ps]
        assert scores == sorted(scores, reverse=True)

    def test_blank_image_first_surviving_candidates(self):
        img = buf(np.full((40, 40, 3), 128))
        params = EdgeBoxParams(n_boxes=10)
        ps = edgeboxes(img, params)
        assert len(ps) == 10
        assert all(sb.score == 0.0 for sb in ps)
        cands = generate_candidates(40, 40, params)
        ordered = sorted(cands, key=lambda b: (b.x, b.y, b.w, b.h))
        expected = nms([ScoredBox(b, 0.0) for b in ordered], params.beta)[:10]
        assert list(ps.boxes) == expected

    def test_deterministic(self):
        rng = np.random.default_rng(47)
        arr = rng.integers(0, 256, size=(30, 30, 3), dtype=np.uint8)
        p1 = edgeboxes(buf(arr), EdgeBoxParams(n_boxes=25))
        p2 = edgeboxes(buf(arr), EdgeBoxParams(n_boxes=25))
        assert p1 == p2

    def test_output_pairwise_iou_below_beta(self):
        img = square_contour_image()
        params = EdgeBoxParams(n_boxes=20)
        ps = edgeboxes(img, params)
        kept = list(ps.boxes)
        for i, a in enumerate(kept):
            for b in kept[i + 1 :]:
                assert iou(a.box, b.box) < params.beta

    def test_params_validation(self):
        for bad in (
            dict(n_boxes=0),
            dict(alpha=0.0),
            dict(alpha=1.0),
            dict(beta=1.2),
            dict(kappa=0.5),
            dict(edge_threshold=1.0),
            dict(min_side_fraction=0.0),
            dict(aspect_ratios=()),
        ):
            with pytest.raises(ParameterError):
                EdgeBoxParams(**bad)
