"""Hierarchical region grouping into object-location hypotheses.

Starting from the graph segmentation, adjacent regions are merged
greedily by a four-part similarity (colour, texture, size, fill) until
one region per connected component remains.  The bounding boxes of every
region ever seen — initial segments and every intermediate merge — form
the hypothesis list, so object locations are proposed at all scales the
grouping passes through.

Similarities depend only on the two regions compared, never on the rest
of the image, so scores pushed into the priority queue stay valid until
one of their regions is merged away; liveness is tracked with a simple
alive-set instead of explicit invalidation.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import BoundingBox, ImageBuffer, ParameterError, ProposalSet, ScoredBox
from .segmentation import (
    RegionStats,
    SegmentationParams,
    felzenszwalb,
    region_stats,
)

__all__ = [
    "MergeEvent",
    "MergeTrace",
    "SimilarityScore",
    "hierarchical_group",
    "merge_regions",
    "region_similarity",
    "selective_search",
    "ss_hypotheses",
]


@dataclass(frozen=True)
class SimilarityScore:
    """Four-part region similarity; ``total`` is the plain sum, in [0, 4]."""

    total: float
    s_color: float
    s_texture: float
    s_size: float
    s_fill: float

    def __post_init__(self) -> None:
        for name in ("s_color", "s_texture", "s_size", "s_fill"):
            v = getattr(self, name)
            if not -1e-9 <= v <= 1.0 + 1e-9:
                raise ParameterError(f"{name} must lie in [0, 1], got {v!r}")
        parts = self.s_color + self.s_texture + self.s_size + self.s_fill
        if abs(self.total - parts) > 1e-9:
            raise ParameterError("total must equal the sum of the components")

    @property
    def components(self) -> tuple[float, float, float, float]:
        return (self.s_color, self.s_texture, self.s_size, self.s_fill)


@dataclass(frozen=True)
class MergeEvent:
    region_a: int
    region_b: int
    merged_region: int
    similarity: SimilarityScore


@dataclass(frozen=True)
class MergeTrace:
    """Merge events in the order they happened.

    For a connected adjacency graph over n regions there are exactly
    n - 1 events; similarities along the sequence need not be monotone
    because they are recomputed as regions grow.
    """

    events: tuple[MergeEvent, ...]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


def region_similarity(a: RegionStats, b: RegionStats, image_area: int) -> SimilarityScore:
    """Similarity of two regions: colour + texture + size + fill.

    Colour and texture are histogram intersections; size favours merging
    small regions early; fill favours pairs that tile their joint
    bounding box (clamped to [0, 1] since scattered pairs can leave more
    empty box than the image-area normalizer accounts for).
    """
    if image_area < a.size + b.size:
        raise ParameterError("image_area smaller than the regions it holds")
    s_color = float(np.minimum(a.color_hist, b.color_hist).sum())
    s_texture = float(np.minimum(a.texture_hist, b.texture_hist).sum())
    s_size = 1.0 - (a.size + b.size) / image_area
    joint = a.bbox.union_bbox(b.bbox)
    s_fill = 1.0 - (joint.area - a.size - b.size) / image_area
    s_fill = min(1.0, max(0.0, s_fill))
    total = s_color + s_texture + s_size + s_fill
    return SimilarityScore(total, s_color, s_texture, s_size, s_fill)


def merge_regions(a: RegionStats, b: RegionStats, label: int | None = None) -> RegionStats:
    """Fuse two regions: sizes add, bboxes union, histograms average by size."""
    if a.label == b.label:
        raise ParameterError("cannot merge a region with itself")
    total = a.size + b.size
    color = (a.size * a.color_hist + b.size * b.color_hist) / total
    texture = (a.size * a.texture_hist + b.size * b.texture_hist) / total
    new_label = max(a.label, b.label) + 1 if label is None else label
    return RegionStats(
        label=new_label,
        size=total,
        bbox=a.bbox.union_bbox(b.bbox),
        color_hist=color,
        texture_hist=texture,
    )


def hierarchical_group(
    regions: Sequence[RegionStats],
    adjacency: Iterable[tuple[int, int]],
) -> tuple[list[BoundingBox], MergeTrace]:
    """Greedy agglomeration; returns hypothesis boxes and the merge trace.

    Each round merges the adjacent pair with the highest similarity,
    ties broken by the lexicographically smallest (min label, max label)
    pair.  Hypotheses are the bboxes of all initial and merged regions in
    first-appearance order with exact duplicates dropped.  The image area
    used by the size/fill terms is the sum of the region sizes (the
    regions partition the image).
    """
    stats: dict[int, RegionStats] = {}
    for r in regions:
        if r.label in stats:
            raise ParameterError(f"duplicate region label {r.label}")
        stats[r.label] = r
    neighbors: dict[int, set[int]] = {lab: set() for lab in stats}
    for a, b in adjacency:
        if a == b:
            raise ParameterError(f"adjacency pair ({a}, {b}) is reflexive")
        if a not in stats or b not in stats:
            raise ParameterError(f"adjacency references unknown label in ({a}, {b})")
        neighbors[a].add(b)
        neighbors[b].add(a)

    image_area = sum(r.size for r in regions)
    hypotheses: list[BoundingBox] = []
    seen: set[tuple[int, int, int, int]] = set()

    def add_box(bb: BoundingBox) -> None:
        key = bb.as_tuple()
        if key not in seen:
            seen.add(key)
            hypotheses.append(bb)

    for r in regions:
        add_box(r.bbox)

    # (-total, min label, max label, score); the label pair is unique per
    # entry, so comparison never reaches the score.
    heap: list[tuple[float, int, int, SimilarityScore]] = []
    for a in sorted(neighbors):
        for b in sorted(neighbors[a]):
            if a < b:
                s = region_similarity(stats[a], stats[b], image_area)
                heapq.heappush(heap, (-s.total, a, b, s))

    alive = set(stats)
    next_label = max(stats) + 1 if stats else 0
    events: list[MergeEvent] = []
    while heap:
        _, a, b, sim = heapq.heappop(heap)
        if a not in alive or b not in alive:
            continue  # one side was merged away; entry is stale
        merged = merge_regions(stats[a], stats[b], label=next_label)
        next_label += 1
        stats[merged.label] = merged
        alive.discard(a)
        alive.discard(b)
        alive.add(merged.label)
        nbrs = {x for x in (neighbors[a] | neighbors[b]) if x in alive and x != merged.label}
        neighbors[merged.label] = nbrs
        for x in sorted(nbrs):
            neighbors[x].add(merged.label)
            s = region_similarity(stats[x], stats[merged.label], image_area)
            heapq.heappush(heap, (-s.total, x, merged.label, s))
        events.append(MergeEvent(a, b, merged.label, sim))
        add_box(merged.bbox)

    return hypotheses, MergeTrace(tuple(events))


def ss_hypotheses(
    img: ImageBuffer, params: SegmentationParams | None = None
) -> list[BoundingBox]:
    """Unscored hypothesis boxes in first-appearance order."""
    params = params if params is not None else SegmentationParams()
    labels = felzenszwalb(img, params)
    regions, adjacency = region_stats(labels, img)
    boxes, _ = hierarchical_group(regions, adjacency)
    return boxes


def selective_search(
    img: ImageBuffer,
    params: SegmentationParams | None = None,
    n_boxes: int | None = None,
    image_id: str = "",
) -> ProposalSet:
    """Full pipeline: segment, group, rank.

    The grouping itself is unranked, so scores are appearance ranks in
    reverse — the last (largest) hypothesis scores 1.0 and the first
    scores 1/m — which orders coarse, high-level hypotheses first.  Pass
    ``n_boxes`` to keep only the top of that ordering.
    """
    boxes = ss_hypotheses(img, params)
    m = len(boxes)
    scored = [ScoredBox(box=bb, score=(i + 1) / m) for i, bb in enumerate(boxes)]
    result = ProposalSet.from_scored(image_id, scored)
    return result if n_boxes is None else result.truncated(n_boxes)
