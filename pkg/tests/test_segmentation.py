"""Segmentation tests: smoothing, graph merging, region descriptors."""

from __future__ import annotations

import math

import numpy as np
import pytest

from proposalbench.core import ImageBuffer, ParameterError
from proposalbench.segmentation import (
    LabelMap,
    SegmentationParams,
    felzenszwalb,
    gaussian_kernel,
    gaussian_smooth,
    region_stats,
)


def buf(arr) -> ImageBuffer:
    return ImageBuffer(np.asarray(arr, dtype=np.uint8))


def two_color(mask, c0=(10, 20, 30), c1=(200, 180, 160)) -> ImageBuffer:
    arr = np.where(mask[:, :, None], np.array(c1, np.uint8), np.array(c0, np.uint8))
    return buf(arr)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def dense_smooth_oracle(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Direct (non-separable) 2-D convolution with clamped sampling."""
    radius = math.ceil(4.0 * sigma)
    taps = [math.exp(-(i * i) / (2.0 * sigma * sigma)) for i in range(-radius, radius + 1)]
    taps = [t / sum(taps) for t in taps]
    h, w, _ = arr.shape
    out = np.zeros((h, w, 3))
    for y in range(h):
        for x in range(w):
            for c in range(3):
                acc = 0.0
                for dy in range(-radius, radius + 1):
                    for dx in range(-radius, radius + 1):
                        sy = min(max(y + dy, 0), h - 1)
                        sx = min(max(x + dx, 0), w - 1)
                        acc += taps[dy + radius] * taps[dx + radius] * float(arr[sy, sx, c])
                out[y, x, c] = acc
    return out


def merge_oracle(smoothed: np.ndarray, k: float, min_size: int):
    """Brute-force segmentation that re-derives Int(C) from first principles.

    Components are recovered by BFS over the list of accepted merge edges,
    and Int(C) is recomputed on every candidate edge as the max accepted
    weight interior to C.  Deliberately quadratic; only for tiny images.
    """
    h, w, _ = smoothed.shape
    n = h * w
    edges = []
    for y in range(h):
        for x in range(w):
            for dx, dy in ((1, 0), (0, 1), (1, 1), (-1, 1)):
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h:
                    p, q = y * w + x, ny * w + nx
                    d = (smoothed[y, x] - smoothed[ny, nx])[None, :]
                    wt = float(np.sqrt(np.einsum("ij,ij->i", d, d))[0])
                    edges.append((wt, min(p, q), max(p, q)))
    edges.sort()

    accepted: list[tuple[float, int, int]] = []

    def members(px: int) -> set[int]:
        comp = {px}
        frontier = [px]
        while frontier:
            cur = frontier.pop()
            for _, a, b in accepted:
                if a == cur and b not in comp:
                    comp.add(b)
                    frontier.append(b)
                elif b == cur and a not in comp:
                    comp.add(a)
                    frontier.append(a)
        return comp

    for wt, a, b in edges:
        ca = members(a)
        if b in ca:
            continue
        cb = members(b)
        int_a = max((w0 for w0, e0, e1 in accepted if e0 in ca and e1 in ca), default=0.0)
        int_b = max((w0 for w0, e0, e1 in accepted if e0 in cb and e1 in cb), default=0.0)
        if wt <= min(int_a + k / len(ca), int_b + k / len(cb)):
            accepted.append((wt, a, b))

    for wt, a, b in edges:
        ca = members(a)
        if b in ca:
            continue
        cb = members(b)
        if len(ca) < min_size or len(cb) < min_size:
            accepted.append((wt, a, b))

    labels = np.full(n, -1, dtype=np.int64)
    next_id = 0
    for p in range(n):
        if labels[p] < 0:
            for q in members(p):
                labels[q] = next_id
            next_id += 1
    return labels.reshape(h, w), next_id


# ---------------------------------------------------------------------------
# Gaussian smoothing
# ---------------------------------------------------------------------------

class TestGaussianSmooth:
    def test_kernel_sums_to_one(self):
        kern = gaussian_kernel(1.4)
        assert kern.shape == (13,)  # radius ceil(5.6) = 6
        assert abs(kern.sum() - 1.0) <= 1e-12

    def test_constant_image_preserved(self):
        out = gaussian_smooth(buf(np.full((12, 9, 3), 128)), 1.4)
        assert np.allclose(out, 128.0, atol=1e-9)

    def test_impulse_equals_outer_product_kernel(self):
        arr = np.zeros((31, 31, 3), dtype=np.uint8)
        arr[15, 15] = 1
        out = gaussian_smooth(buf(arr), 1.4)
        kern = gaussian_kernel(1.4)
        expected = np.outer(kern, kern)
        window = out[9:22, 9:22, 0]
        assert np.allclose(window, expected, atol=1e-12)
        # nothing leaks beyond the truncation radius
        masked = out[:, :, 2].copy()
        masked[9:22, 9:22] = 0.0
        assert np.all(masked == 0.0)

    def test_matches_dense_oracle_with_borders(self):
        rng = np.random.default_rng(77)
        arr = rng.integers(0, 256, size=(9, 7, 3), dtype=np.uint8)
        out = gaussian_smooth(buf(arr), 0.9)
        assert np.allclose(out, dense_smooth_oracle(arr, 0.9), atol=1e-9)

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ParameterError):
            gaussian_smooth(buf(np.zeros((4, 4, 3))), 0.0)
        with pytest.raises(ParameterError):
            gaussian_kernel(-1.0)


# ---------------------------------------------------------------------------
# Graph segmentation
# ---------------------------------------------------------------------------

class TestFelzenszwalb:
    def test_uniform_image_single_segment(self):
        lm = felzenszwalb(buf(np.full((10, 10, 3), 90)), SegmentationParams())
        assert lm.n_segments == 1
        assert np.all(lm.labels == 0)

    def test_half_and_half_splits_in_two(self):
        arr = np.zeros((10, 10, 3), dtype=np.uint8)
        arr[:, 5:] = 255
        lm = felzenszwalb(buf(arr), SegmentationParams(sigma=0.1, k=1.0, min_size=1))
        assert lm.n_segments == 2
        assert np.all(lm.labels[:, :5] == 0)
        assert np.all(lm.labels[:, 5:] == 1)

    def test_min_size_merges_halves(self):
        arr = np.zeros((10, 10, 3), dtype=np.uint8)
        arr[:, 5:] = 255
        lm = felzenszwalb(buf(arr), SegmentationParams(sigma=0.1, k=1.0, min_size=60))
        assert lm.n_segments == 1

    def test_matches_merge_oracle_on_two_color_suite(self):
        rng = np.random.default_rng(1234)
        cases = 0
        for trial in range(18):
            mask = rng.random((6, 6)) < 0.5
            img = two_color(mask)
            k = (1.0, 50.0, 1000.0)[trial % 3]
            min_size = (1, 4, 10)[trial // 6]
            params = SegmentationParams(sigma=0.1, k=k, min_size=min_size)
            got = felzenszwalb(img, params)
            want, want_n = merge_oracle(gaussian_smooth(img, 0.1), k, min_size)
            assert np.array_equal(got.labels, want), f"trial {trial}"
            assert got.n_segments == want_n
            cases += 1
        assert cases == 18

    def test_matches_merge_oracle_on_three_color_images(self):
        rng = np.random.default_rng(99)
        palette = np.array([(250, 30, 30), (30, 250, 30), (40, 40, 250)], np.uint8)
        for trial in range(6):
            idx = rng.integers(0, 3, size=(6, 6))
            img = buf(palette[idx])
            params = SegmentationParams(sigma=0.1, k=20.0, min_size=(1, 3)[trial % 2])
            got = felzenszwalb(img, params)
            want, want_n = merge_oracle(gaussian_smooth(img, 0.1), 20.0, (1, 3)[trial % 2])
            assert np.array_equal(got.labels, want)
            assert got.n_segments == want_n

    def test_partition_and_min_size_on_noise(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
            lm = felzenszwalb(buf(arr), SegmentationParams(sigma=0.8, k=300.0, min_size=30))
            sizes = np.bincount(lm.labels.ravel(), minlength=lm.n_segments)
            assert sizes.sum() == 32 * 32
            assert np.all(sizes >= 30)

    def test_deterministic_reruns(self):
        rng = np.random.default_rng(7)
        arr = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        params = SegmentationParams(sigma=0.8, k=150.0, min_size=5)
        a = felzenszwalb(buf(arr), params)
        b = felzenszwalb(buf(arr), params)
        assert np.array_equal(a.labels, b.labels)
        assert a.n_segments == b.n_segments

    def test_larger_k_never_oversegments(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
            coarse = felzenszwalb(buf(arr), SegmentationParams(sigma=0.8, k=10000.0, min_size=1))
            fine = felzenszwalb(buf(arr), SegmentationParams(sigma=0.8, k=10.0, min_size=1))
            assert coarse.n_segments <= fine.n_segments

    def test_single_pixel_image(self):
        lm = felzenszwalb(buf([[[5, 5, 5]]]), SegmentationParams(sigma=0.5, k=1.0, min_size=1))
        assert lm.n_segments == 1 and lm.labels.shape == (1, 1)

    def test_params_validation(self):
        for bad in (dict(sigma=0), dict(k=0), dict(k=-3), dict(min_size=0), dict(min_size=1.5)):
            with pytest.raises(ParameterError):
                SegmentationParams(**bad)


class TestLabelMap:
    def test_rejects_gap_in_ids(self):
        with pytest.raises(ParameterError):
            LabelMap(np.array([[0, 2], [0, 2]]), 3)

    def test_rejects_out_of_range(self):
        with pytest.raises(ParameterError):
            LabelMap(np.array([[0, 1]]), 1)
        with pytest.raises(ParameterError):
            LabelMap(np.array([[-1, 0]]), 1)

    def test_immutable(self):
        lm = LabelMap(np.array([[0, 1]]), 2)
        with pytest.raises(ValueError):
            lm.labels[0, 0] = 1


# ---------------------------------------------------------------------------
# Region descriptors
# ---------------------------------------------------------------------------

class TestRegionStats:
    def test_uniform_red_histograms(self):
        arr = np.zeros((8, 8, 3), dtype=np.uint8)
        arr[:, :, 0] = 255
        img = buf(arr)
        lm = felzenszwalb(img, SegmentationParams(sigma=0.5, k=10.0, min_size=1))
        regions, adjacency = region_stats(lm, img)
        assert len(regions) == 1 and adjacency == set()
        r = regions[0]
        assert r.size == 64
        assert r.bbox.as_tuple() == (0, 0, 8, 8)
        # 255 lands in the last red bin; zero in the first bin of G and B
        assert r.color_hist[24] == pytest.approx(1 / 3)
        assert r.color_hist[25] == pytest.approx(1 / 3)
        assert r.color_hist[50] == pytest.approx(1 / 3)
        assert r.texture_degenerate
        assert np.all(r.texture_hist == 0.0)

    def test_half_and_half_adjacency(self):
        arr = np.zeros((10, 10, 3), dtype=np.uint8)
        arr[:, 5:] = 255
        img = buf(arr)
        lm = felzenszwalb(img, SegmentationParams(sigma=0.1, k=1.0, min_size=1))
        regions, adjacency = region_stats(lm, img)
        assert adjacency == {(0, 1)}
        assert regions[0].bbox.as_tuple() == (0, 0, 5, 10)
        assert regions[1].bbox.as_tuple() == (5, 0, 5, 10)
        for r in regions:
            assert not r.texture_degenerate
            assert r.texture_hist.sum() == pytest.approx(1.0, abs=1e-9)

    def test_sizes_partition_and_bboxes_cover(self):
        rng = np.random.default_rng(3)
        arr = rng.integers(0, 256, size=(24, 20, 3), dtype=np.uint8)
        img = buf(arr)
        lm = felzenszwalb(img, SegmentationParams(sigma=0.8, k=60.0, min_size=4))
        regions, adjacency = region_stats(lm, img)
        assert sum(r.size for r in regions) == 24 * 20
        for r in regions:
            ys, xs = np.nonzero(lm.labels == r.label)
            assert r.size == len(xs)
            assert r.bbox.as_tuple() == (
                int(xs.min()),
                int(ys.min()),
                int(xs.max() - xs.min() + 1),
                int(ys.max() - ys.min() + 1),
            )
            assert r.color_hist.sum() == pytest.approx(1.0, abs=1e-9)
        for a, b in adjacency:
            assert a < b

    def test_adjacency_matches_bruteforce(self):
        rng = np.random.default_rng(5)
        arr = rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)
        img = buf(arr)
        lm = felzenszwalb(img, SegmentationParams(sigma=0.8, k=40.0, min_size=2))
        _, adjacency = region_stats(lm, img)
        want = set()
        lab = lm.labels
        for y in range(12):
            for x in range(12):
                for ny, nx in ((y + 1, x), (y, x + 1)):
                    if ny < 12 and nx < 12 and lab[y, x] != lab[ny, nx]:
                        want.add((min(lab[y, x], lab[ny, nx]), max(lab[y, x], lab[ny, nx])))
        assert adjacency == {(int(a), int(b)) for a, b in want}

    def test_dimension_mismatch_rejected(self):
        img = buf(np.zeros((4, 4, 3)))
        lm = LabelMap(np.zeros((4, 5), dtype=np.int32), 1)
        with pytest.raises(ParameterError):
            region_stats(lm, img)
