"""Graph-based image segmentation and per-region descriptors.

The segmenter is a single-scale graph merge over the 8-connected pixel
grid (Felzenszwalb-style): edges are weighted by the Euclidean RGB
distance between Gaussian-smoothed pixels and processed in ascending
order, two components fusing when the connecting weight is no larger
than either side's internal variation plus a size-dependent slack
``k/|C|``.  A second pass in the same edge order absorbs any component
smaller than ``min_size`` into a neighbour.

Region descriptors (size, bounding box, colour and texture histograms)
are computed on the *unsmoothed* image so they reflect observed
appearance rather than the smoothed working copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import BoundingBox, ImageBuffer, ParameterError

__all__ = [
    "LabelMap",
    "RegionStats",
    "SegmentationParams",
    "felzenszwalb",
    "gaussian_kernel",
    "gaussian_smooth",
    "region_stats",
    "sobel_gradients",
]


@dataclass(frozen=True)
class SegmentationParams:
    """Segmentation knobs: smoothing width, observation scale, size floor."""

    sigma: float = 1.4
    k: float = 1800.0
    min_size: int = 1800

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be > 0, got {self.sigma!r}")
        if not self.k > 0:
            raise ParameterError(f"k must be > 0, got {self.k!r}")
        if int(self.min_size) != self.min_size or self.min_size < 1:
            raise ParameterError(
                f"min_size must be a positive integer, got {self.min_size!r}"
            )
        object.__setattr__(self, "min_size", int(self.min_size))


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel segment ids over an image grid.

    ``labels`` is an (H, W) int32 array; ids are contiguous in
    ``0..n_segments-1`` and every id occurs at least once.
    """

    labels: np.ndarray
    n_segments: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels)
        if arr.ndim != 2 or arr.size == 0:
            raise ParameterError("labels must be a nonempty 2-D array")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ParameterError(f"labels must be integral, got dtype {arr.dtype}")
        if self.n_segments < 1:
            raise ParameterError(f"n_segments must be >= 1, got {self.n_segments}")
        flat = arr.ravel()
        if flat.min() < 0 or flat.max() >= self.n_segments:
            raise ParameterError("label ids must lie in [0, n_segments)")
        if not np.all(np.bincount(flat, minlength=self.n_segments) > 0):
            raise ParameterError("label ids must be contiguous (every id present)")
        arr = arr.astype(np.int32, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class RegionStats:
    """Descriptors for one segment: size, extent, colour and texture.

    ``color_hist`` is 75 bins (25 per channel, channel-major) normalized
    to sum 1 over all 75.  ``texture_hist`` is 24 bins (8 gradient
    orientations per channel) normalized the same way, except that a
    region with no gradient energy keeps an all-zero histogram rather
    than inventing mass.  Size-weighted merging of a degenerate region
    with a normal one therefore yields texture mass strictly between 0
    and 1, so only an upper bound is enforced here.
    """

    label: int
    size: int
    bbox: BoundingBox
    color_hist: np.ndarray
    texture_hist: np.ndarray

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ParameterError(f"region size must be >= 1, got {self.size}")
        color = np.asarray(self.color_hist, dtype=np.float64)
        texture = np.asarray(self.texture_hist, dtype=np.float64)
        if color.shape != (75,):
            raise ParameterError(f"color_hist must have 75 bins, got {color.shape}")
        if texture.shape != (24,):
            raise ParameterError(f"texture_hist must have 24 bins, got {texture.shape}")
        if abs(color.sum() - 1.0) > 1e-9:
            raise ParameterError("color_hist must sum to 1")
        tsum = texture.sum()
        if not 0.0 <= tsum <= 1.0 + 1e-9 or np.any(texture < 0.0):
            raise ParameterError("texture_hist mass must lie in [0, 1]")
        color = color.copy()
        texture = texture.copy()
        color.setflags(write=False)
        texture.setflags(write=False)
        object.__setattr__(self, "color_hist", color)
        object.__setattr__(self, "texture_hist", texture)

    @property
    def texture_degenerate(self) -> bool:
        """True when the region has no gradient energy at all."""
        return float(self.texture_hist.sum()) == 0.0


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian taps truncated at radius ceil(4*sigma), summing to 1."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma!r}")
    radius = math.ceil(4.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return kern / kern.sum()


def gaussian_smooth(img: ImageBuffer, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge replication at the borders.

    Returns an (H, W, 3) float64 array; the input image is untouched.
    """
    kern = gaussian_kernel(sigma)
    radius = kern.shape[0] // 2
    arr = img.pixels.astype(np.float64)
    h, w = arr.shape[:2]

    padded = np.pad(arr, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(arr)
    for i in range(kern.shape[0]):
        out += kern[i] * padded[:, i : i + w]

    padded = np.pad(out, ((radius, radius), (0, 0), (0, 0)), mode="edge")
    out = np.zeros_like(arr)
    for i in range(kern.shape[0]):
        out += kern[i] * padded[i : i + h]
    return out


def sobel_gradients(channel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel x/y derivatives of a 2-D array, borders replicated."""
    p = np.pad(np.asarray(channel, dtype=np.float64), 1, mode="edge")
    r0, r1, r2 = p[:-2], p[1:-1], p[2:]
    gx = (r0[:, 2:] - r0[:, :-2]) + 2.0 * (r1[:, 2:] - r1[:, :-2]) + (r2[:, 2:] - r2[:, :-2])
    gy = (r2[:, :-2] - r0[:, :-2]) + 2.0 * (r2[:, 1:-1] - r0[:, 1:-1]) + (r2[:, 2:] - r0[:, 2:])
    return gx, gy


@njit(cache=True)
def _find_root(parent: np.ndarray, x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _segment_kernel(
    u: np.ndarray,
    v: np.ndarray,
    w: np.ndarray,
    n: int,
    k: float,
    min_size: int,
) -> tuple[np.ndarray, int]:
    parent = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    # Max weight merged into each component so far; edges arrive ascending,
    # so the most recent merge weight is the max.
    internal = np.zeros(n, dtype=np.float64)

    for i in range(u.shape[0]):
        ra = _find_root(parent, u[i])
        rb = _find_root(parent, v[i])
        if ra == rb:
            continue
        ta = internal[ra] + k / size[ra]
        tb = internal[rb] + k / size[rb]
        lim = ta if ta < tb else tb
        if w[i] <= lim:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
            internal[ra] = w[i]

    if min_size > 1:
        for i in range(u.shape[0]):
            ra = _find_root(parent, u[i])
            rb = _find_root(parent, v[i])
            if ra != rb and (size[ra] < min_size or size[rb] < min_size):
                if size[ra] < size[rb]:
                    ra, rb = rb, ra
                parent[rb] = ra
                size[ra] += size[rb]

    remap = np.full(n, -1, dtype=np.int32)
    count = 0
    out = np.empty(n, dtype=np.int32)
    for p in range(n):
        r = _find_root(parent, p)
        if remap[r] < 0:
            remap[r] = count
            count += 1
        out[p] = remap[r]
    return out, count


def _grid_edges(smoothed: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """8-connected grid edges (u < v) with Euclidean RGB weights."""
    h, w = smoothed.shape[:2]
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    flat = smoothed.reshape(-1, 3)

    pairs = (
        (idx[:, :-1], idx[:, 1:]),    # east
        (idx[:-1, :], idx[1:, :]),    # south
        (idx[:-1, :-1], idx[1:, 1:]), # south-east
        (idx[:-1, 1:], idx[1:, :-1]), # south-west
    )
    us = np.concatenate([a.ravel() for a, _ in pairs])
    vs = np.concatenate([b.ravel() for _, b in pairs])
    diff = flat[us] - flat[vs]
    weights = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return us, vs, weights


def felzenszwalb(img: ImageBuffer, params: SegmentationParams) -> LabelMap:
    """Segment an image into components no smaller than ``params.min_size``.

    The merge predicate follows the classic scale-of-observation rule:
    an edge of weight w joins components C1, C2 iff
    ``w <= min(Int(C1) + k/|C1|, Int(C2) + k/|C2|)`` where Int(C) is the
    largest weight already merged inside C (0 for singletons).  Edge
    order is ascending weight with ties broken by (smaller pixel index,
    larger pixel index), which pins the output exactly for any input.
    """
    smoothed = gaussian_smooth(img, params.sigma)
    h, w = img.height, img.width
    us, vs, weights = _grid_edges(smoothed)
    order = np.lexsort((vs, us, weights))
    labels, count = _segment_kernel(
        us[order], vs[order], weights[order], h * w, float(params.k), params.min_size
    )
    return LabelMap(labels.reshape(h, w), int(count))


def _color_histograms(flat_labels: np.ndarray, pixels: np.ndarray, n: int, sizes: np.ndarray) -> np.ndarray:
    values = pixels.reshape(-1, 3).astype(np.int64)
    bins = (values * 25) >> 8  # 25 uniform bins over [0, 256)
    combined = flat_labels[:, None] * 75 + np.arange(3, dtype=np.int64) * 25 + bins
    counts = np.bincount(combined.ravel(), minlength=n * 75).reshape(n, 75)
    return counts / (3.0 * sizes)[:, None]


def _texture_histograms(flat_labels: np.ndarray, pixels: np.ndarray, n: int) -> np.ndarray:
    hists = np.zeros((n, 24), dtype=np.float64)
    for c in range(3):
        gx, gy = sobel_gradients(pixels[:, :, c])
        mag = np.sqrt(gx * gx + gy * gy)
        theta = np.mod(np.arctan2(gy, gx), np.pi)
        bins = np.minimum((theta * (8.0 / np.pi)).astype(np.int64), 7)
        combined = flat_labels * 24 + c * 8 + bins.ravel()
        hists += np.bincount(
            combined, weights=mag.ravel(), minlength=n * 24
        ).reshape(n, 24)
    totals = hists.sum(axis=1)
    nonzero = totals > 0
    hists[nonzero] /= totals[nonzero, None]
    return hists


def region_stats(
    labels: LabelMap, img: ImageBuffer
) -> tuple[list[RegionStats], set[tuple[int, int]]]:
    """Per-segment descriptors plus the 4-connected adjacency relation.

    Adjacency pairs are unordered, reported once each as ``(a, b)`` with
    ``a < b``.
    """
    if (labels.height, labels.width) != (img.height, img.width):
        raise ParameterError(
            f"label map {labels.width}x{labels.height} does not match "
            f"image {img.width}x{img.height}"
        )
    h, w = img.height, img.width
    n = labels.n_segments
    lab = labels.labels
    flat = lab.ravel().astype(np.int64)

    sizes = np.bincount(flat, minlength=n)

    xs = np.tile(np.arange(w, dtype=np.int64), h)
    ys = np.repeat(np.arange(h, dtype=np.int64), w)
    order = np.argsort(flat, kind="stable")
    starts = np.searchsorted(flat[order], np.arange(n))
    x0 = np.minimum.reduceat(xs[order], starts)
    x1 = np.maximum.reduceat(xs[order], starts)
    y0 = np.minimum.reduceat(ys[order], starts)
    y1 = np.maximum.reduceat(ys[order], starts)

    color = _color_histograms(flat, img.pixels, n, sizes.astype(np.float64))
    texture = _texture_histograms(flat, img.pixels, n)

    regions = [
        RegionStats(
            label=i,
            size=int(sizes[i]),
            bbox=BoundingBox(int(x0[i]), int(y0[i]), int(x1[i] - x0[i] + 1), int(y1[i] - y0[i] + 1)),
            color_hist=color[i],
            texture_hist=texture[i],
        )
        for i in range(n)
    ]

    adjacency: set[tuple[int, int]] = set()
    for a, b in ((lab[:, :-1], lab[:, 1:]), (lab[:-1, :], lab[1:, :])):
        differ = a != b
        lo = np.minimum(a[differ], b[differ]).astype(np.int64)
        hi = np.maximum(a[differ], b[differ]).astype(np.int64)
        for code in np.unique(lo * n + hi):
            adjacency.add((int(code // n), int(code % n)))
    return regions, adjacency
