"""Contour-based objectness over a sliding-window candidate set.

A box is scored by how much edge mass it wholly encloses: edge pixels
are grouped into roughly-straight contour fragments, fragments chained
by an orientation affinity, and any fragment connected (directly or
through a chain) to a fragment that touches or crosses the box boundary
is discounted.  Scores are normalized by box perimeter raised to
``kappa``, which favours small boxes holding a lot of contour.

Candidate boxes come from a dense sliding window over aspect ratios and
geometric scales; the winners survive a greedy non-maximum suppression.

There are two scorer entry points kept bit-compatible by construction:
:func:`score_box` is the plain-Python reference that walks group objects
one box at a time, and :class:`BoxScorer` is the compiled batch path the
pipelines use.  Both run the same relaxation in the same order, so their
results are identical floats, not merely close ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .core import (
    BoundingBox,
    ImageBuffer,
    ParameterError,
    ProposalSet,
    ScoredBox,
    iou,
    round_half_up,
)
from .segmentation import sobel_gradients

__all__ = [
    "BoxScorer",
    "EdgeBoxParams",
    "EdgeGroup",
    "EdgeMap",
    "compute_affinities",
    "detect_edges",
    "edgeboxes",
    "generate_candidates",
    "group_affinity",
    "group_edges",
    "nms",
    "score_box",
]

_DEFAULT_RATIOS = tuple(3.0 ** (j / 3.0 - 1.0) for j in range(7))


@dataclass(frozen=True)
class EdgeBoxParams:
    """Knobs for edge detection, grouping, scoring, search, and NMS."""

    n_boxes: int = 100
    edge_threshold: float = 0.1
    gamma: float = 2.0
    affinity_radius: float = 2.0
    chain_cutoff: float = 0.05
    alpha: float = 0.65
    min_side_fraction: float = 0.1
    aspect_ratios: tuple[float, ...] = _DEFAULT_RATIOS
    kappa: float = 1.5
    beta: float = 0.75

    def __post_init__(self) -> None:
        if self.n_boxes < 1:
            raise ParameterError(f"n_boxes must be >= 1, got {self.n_boxes}")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")
        if self.kappa < 1.0:
            raise ParameterError(f"kappa must be >= 1, got {self.kappa}")
        if not 0.0 <= self.edge_threshold < 1.0:
            raise ParameterError("edge_threshold must lie in [0, 1)")
        if self.gamma <= 0 or self.affinity_radius <= 0:
            raise ParameterError("gamma and affinity_radius must be positive")
        if not 0.0 <= self.chain_cutoff < 1.0:
            raise ParameterError("chain_cutoff must lie in [0, 1)")
        if not 0.0 < self.min_side_fraction <= 1.0:
            raise ParameterError("min_side_fraction must lie in (0, 1]")
        if not self.aspect_ratios or any(r <= 0 for r in self.aspect_ratios):
            raise ParameterError("aspect_ratios must be positive")


@dataclass(frozen=True)
class EdgeMap:
    """Per-pixel edge strength (max-normalized) and orientation in [0, pi)."""

    magnitude: np.ndarray
    orientation: np.ndarray

    def __post_init__(self) -> None:
        mag = np.asarray(self.magnitude, dtype=np.float64)
        ori = np.asarray(self.orientation, dtype=np.float64)
        if mag.ndim != 2 or mag.size == 0 or mag.shape != ori.shape:
            raise ParameterError("magnitude and orientation must be matching 2-D arrays")
        if mag.min() < 0.0 or mag.max() > 1.0:
            raise ParameterError("magnitudes must lie in [0, 1]")
        if ori.min() < 0.0 or ori.max() >= np.pi:
            raise ParameterError("orientations must lie in [0, pi)")
        mag = mag.copy()
        ori = ori.copy()
        mag.setflags(write=False)
        ori.setflags(write=False)
        object.__setattr__(self, "magnitude", mag)
        object.__setattr__(self, "orientation", ori)

    @property
    def height(self) -> int:
        return self.magnitude.shape[0]

    @property
    def width(self) -> int:
        return self.magnitude.shape[1]


@dataclass(frozen=True)
class EdgeGroup:
    """One contour fragment: member pixels plus summary statistics."""

    id: int
    pixels: tuple[tuple[int, int], ...]
    mean_position: tuple[float, float]
    mean_orientation: float
    mass: float

    def __post_init__(self) -> None:
        if not self.pixels:
            raise ParameterError("an edge group cannot be empty")
        if self.mass <= 0.0:
            raise ParameterError("group mass must be positive")


def detect_edges(img: ImageBuffer, edge_threshold: float = 0.1) -> EdgeMap:
    """Sobel gradients of the luminance channel, thresholded and normalized.

    Magnitudes are divided by their max so the threshold is a fraction of
    the strongest edge present; a constant image yields an all-zero map.
    """
    px = img.pixels.astype(np.float64)
    lum = 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
    gx, gy = sobel_gradients(lum)
    mag = np.sqrt(gx * gx + gy * gy)
    peak = mag.max()
    if peak > 0.0:
        mag = mag / peak
        mag[mag < edge_threshold] = 0.0
    ori = np.mod(np.arctan2(gy, gx), np.pi)
    ori[ori >= np.pi] = 0.0  # mod can round a tiny negative angle up to pi itself
    return EdgeMap(mag, ori)


@njit(cache=True)
def _group_kernel(mag: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, int]:
    h, w = mag.shape
    gid = np.full((h, w), -1, dtype=np.int32)
    budget = np.zeros((h, w), dtype=np.float64)
    qy = np.empty(h * w, dtype=np.int64)
    qx = np.empty(h * w, dtype=np.int64)
    half_pi = np.pi / 2.0
    count = 0
    for sy in range(h):
        for sx in range(w):
            if mag[sy, sx] <= 0.0 or gid[sy, sx] >= 0:
                continue
            gid[sy, sx] = count
            budget[sy, sx] = 0.0
            head, tail = 0, 1
            qy[0] = sy
            qx[0] = sx
            while head < tail:
                cy, cx = qy[head], qx[head]
                head += 1
                cb = budget[cy, cx]
                ct = theta[cy, cx]
                for dy in range(-1, 2):
                    for dx in range(-1, 2):
                        if dy == 0 and dx == 0:
                            continue
                        ny, nx = cy + dy, cx + dx
                        if ny < 0 or ny >= h or nx < 0 or nx >= w:
                            continue
                        if mag[ny, nx] <= 0.0 or gid[ny, nx] >= 0:
                            continue
                        d = abs(ct - theta[ny, nx])
                        if d > half_pi:
                            d = np.pi - d
                        nb = cb + d
                        if nb < half_pi:
                            gid[ny, nx] = count
                            budget[ny, nx] = nb
                            qy[tail] = ny
                            qx[tail] = nx
                            tail += 1
            count += 1
    return gid, count


def _group_arrays(edges: EdgeMap):
    """Group the edge map and summarize each group as parallel arrays."""
    gid_map, n = _group_kernel(edges.magnitude, edges.orientation)
    if n == 0:
        empty_f = np.zeros(0, dtype=np.float64)
        empty_i = np.zeros(0, dtype=np.int64)
        return gid_map, dict(
            n=0, mass=empty_f, mx=empty_f, my=empty_f, mtheta=empty_f,
            x0=empty_i, y0=empty_i, x1=empty_i, y1=empty_i,
        )
    ys, xs = np.nonzero(gid_map >= 0)
    g = gid_map[ys, xs].astype(np.int64)
    m = edges.magnitude[ys, xs]
    t = edges.orientation[ys, xs]
    mass = np.bincount(g, weights=m, minlength=n)
    mx = np.bincount(g, weights=m * xs, minlength=n) / mass
    my = np.bincount(g, weights=m * ys, minlength=n) / mass
    s2 = np.bincount(g, weights=m * np.sin(2.0 * t), minlength=n)
    c2 = np.bincount(g, weights=m * np.cos(2.0 * t), minlength=n)
    mtheta = np.mod(0.5 * np.arctan2(s2, c2), np.pi)
    order = np.argsort(g, kind="stable")
    starts = np.searchsorted(g[order], np.arange(n))
    x0 = np.minimum.reduceat(xs[order], starts)
    x1 = np.maximum.reduceat(xs[order], starts)
    y0 = np.minimum.reduceat(ys[order], starts)
    y1 = np.maximum.reduceat(ys[order], starts)
    return gid_map, dict(
        n=n, mass=mass, mx=mx, my=my, mtheta=mtheta,
        x0=x0.astype(np.int64), y0=y0.astype(np.int64),
        x1=x1.astype(np.int64), y1=y1.astype(np.int64),
    )


def group_edges(edges: EdgeMap) -> list[EdgeGroup]:
    """Partition nonzero edge pixels into roughly-straight fragments.

    A group grows from its scan-order seed across 8-connected nonzero
    pixels for as long as the cumulative orientation change along the
    admission path stays strictly below a quarter turn, so an L-shaped
    contour splits at its corner.
    """
    gid_map, arrs = _group_arrays(edges)
    if arrs["n"] == 0:
        return []
    ys, xs = np.nonzero(gid_map >= 0)
    g = gid_map[ys, xs].astype(np.int64)
    order = np.argsort(g, kind="stable")
    starts = np.searchsorted(g[order], np.arange(arrs["n"] + 1))
    groups = []
    for i in range(arrs["n"]):
        members = order[starts[i] : starts[i + 1]]
        pix = tuple((int(xs[j]), int(ys[j])) for j in members)
        groups.append(
            EdgeGroup(
                id=i,
                pixels=pix,
                mean_position=(float(arrs["mx"][i]), float(arrs["my"][i])),
                mean_orientation=float(arrs["mtheta"][i]),
                mass=float(arrs["mass"][i]),
            )
        )
    return groups


def _affinity_value(
    xa: float, ya: float, ta: float,
    xb: float, yb: float, tb: float,
    radius: float, gamma: float,
) -> float:
    """Shared scalar affinity formula; callers order the pair canonically."""
    dx = xb - xa
    dy = yb - ya
    if dx * dx + dy * dy > radius * radius:
        return 0.0
    tab = math.atan2(dy, dx)
    if tab < 0.0:
        tab += math.pi
    if tab >= math.pi:
        tab -= math.pi
    return abs(math.cos(ta - tab) * math.cos(tb - tab)) ** gamma


def group_affinity(a: EdgeGroup, b: EdgeGroup, params: EdgeBoxParams | None = None) -> float:
    """Orientation agreement of two nearby groups, in [0, 1].

    Zero beyond the affinity radius; otherwise both orientations are
    compared against the line joining the mean positions.  The pair is
    ordered by position before computing that line, making the result
    exactly symmetric.
    """
    params = params if params is not None else EdgeBoxParams()
    pa = (a.mean_position[0], a.mean_position[1], a.mean_orientation)
    pb = (b.mean_position[0], b.mean_position[1], b.mean_orientation)
    lo, hi = (pa, pb) if pa[0] < pb[0] or (pa[0] == pb[0] and pa[1] <= pb[1]) else (pb, pa)
    return _affinity_value(
        lo[0], lo[1], lo[2], hi[0], hi[1], hi[2],
        params.affinity_radius, params.gamma,
    )


def compute_affinities(
    groups: Sequence[EdgeGroup], params: EdgeBoxParams | None = None
) -> dict[tuple[int, int], float]:
    """All within-radius pair affinities, keyed by (lower id, higher id)."""
    params = params if params is not None else EdgeBoxParams()
    out: dict[tuple[int, int], float] = {}
    r2 = params.affinity_radius * params.affinity_radius
    for i, a in enumerate(groups):
        for b in groups[i + 1 :]:
            dx = a.mean_position[0] - b.mean_position[0]
            dy = a.mean_position[1] - b.mean_position[1]
            if dx * dx + dy * dy <= r2:
                key = (a.id, b.id) if a.id < b.id else (b.id, a.id)
                out[key] = group_affinity(a, b, params)
    return out


def score_box(
    box: BoundingBox,
    groups: Sequence[EdgeGroup],
    affinities: Mapping[tuple[int, int], float],
    params: EdgeBoxParams | None = None,
) -> float:
    """Enclosed edge mass, chain-discounted, per unit perimeter^kappa.

    A group counts only when every pixel sits strictly inside the box
    (touching the box's perimeter pixels zeroes it); its weight is one
    minus the best affinity-chain product linking it to any group that
    is not wholly inside, chains below the cutoff ignored.
    """
    params = params if params is not None else EdgeBoxParams()
    xi0, yi0 = box.x + 1, box.y + 1
    xi1, yi1 = box.x + box.w - 2, box.y + box.h - 2
    if xi1 < xi0 or yi1 < yi0:
        return 0.0

    ids = [g.id for g in groups]
    if len(set(ids)) != len(ids):
        raise ParameterError("group ids must be unique")
    by_id = {g.id: g for g in groups}
    inside: dict[int, bool] = {}
    for g in groups:
        cols = [p[0] for p in g.pixels]
        rows = [p[1] for p in g.pixels]
        inside[g.id] = (
            min(cols) >= xi0 and min(rows) >= yi0
            and max(cols) <= xi1 and max(rows) <= yi1
        )

    adj: dict[int, list[tuple[int, float]]] = {i: [] for i in ids}
    for (i, j), a in affinities.items():
        if a > params.chain_cutoff:
            adj[i].append((j, a))
            adj[j].append((i, a))
    for i in adj:
        adj[i].sort()

    # Best chain product from any not-wholly-inside group, relaxed to a
    # fixpoint; the fixpoint is order-independent because every chain's
    # product is accumulated source-to-tail either way.
    best = {i: (0.0 if inside[i] else 1.0) for i in ids}
    ordered = sorted(ids)
    changed = True
    while changed:
        changed = False
        for i in ordered:
            bi = best[i]
            if bi <= params.chain_cutoff:
                continue
            for j, a in adj[i]:
                cand = bi * a
                if cand > params.chain_cutoff and cand > best[j]:
                    best[j] = cand
                    changed = True

    total = 0.0
    for i in ordered:
        if inside[i]:
            total += (1.0 - best[i]) * by_id[i].mass
    return total / (2.0 * (box.w + box.h)) ** params.kappa


@njit(cache=True)
def _affinity_edge_kernel(
    mx, my, mtheta, cell_key, cell_order, cell_starts, ncx, ncells,
    radius, gamma, cutoff,
):
    """Emit (i, j, affinity) for all within-radius pairs with aff > cutoff."""
    n = mx.shape[0]
    total = 0
    ei = np.empty(0, dtype=np.int64)
    ej = np.empty(0, dtype=np.int64)
    ea = np.empty(0, dtype=np.float64)
    # first pass: count, second pass: fill
    for phase in range(2):
        if phase == 1:
            ei = np.empty(total, dtype=np.int64)
            ej = np.empty(total, dtype=np.int64)
            ea = np.empty(total, dtype=np.float64)
        total = 0
        for i in range(n):
            ci = cell_key[i]
            cyi = ci // ncx
            cxi = ci % ncx
            for oy in range(-1, 2):
                for ox in range(-1, 2):
                    ny = cyi + oy
                    nx = cxi + ox
                    if ny < 0 or nx < 0 or nx >= ncx:
                        continue
                    c = ny * ncx + nx
                    if c < 0 or c >= ncells:
                        continue
                    for t in range(cell_starts[c], cell_starts[c + 1]):
                        j = cell_order[t]
                        if j <= i:
                            continue
                        dx = mx[j] - mx[i]
                        dy = my[j] - my[i]
                        if dx * dx + dy * dy > radius * radius:
                            continue
                        # canonical order by (x, y), matching the scalar path
                        if mx[i] < mx[j] or (mx[i] == mx[j] and my[i] <= my[j]):
                            ax, ay, at = mx[i], my[i], mtheta[i]
                            bx, by, bt = mx[j], my[j], mtheta[j]
                        else:
                            ax, ay, at = mx[j], my[j], mtheta[j]
                            bx, by, bt = mx[i], my[i], mtheta[i]
                        ddx = bx - ax
                        ddy = by - ay
                        tab = math.atan2(ddy, ddx)
                        if tab < 0.0:
                            tab += math.pi
                        if tab >= math.pi:
                            tab -= math.pi
                        aff = abs(math.cos(at - tab) * math.cos(bt - tab)) ** gamma
                        if aff > cutoff:
                            if phase == 1:
                                ei[total] = i
                                ej[total] = j
                                ea[total] = aff
                            total += 1
    return ei, ej, ea


@njit(cache=True)
def _score_numerators_kernel(
    bx, by, bw, bh,
    gx0, gy0, gx1, gy1, gmass,
    indptr, indices, affs,
    comp_id, comp_size, comp_starts, comp_members,
    cutoff,
):
    nb = bx.shape[0]
    ng = gx0.shape[0]
    out = np.zeros(nb, dtype=np.float64)
    inside_stamp = np.full(ng, -1, dtype=np.int64)
    comp_stamp = np.full(comp_starts.shape[0] - 1, -1, dtype=np.int64)
    best = np.zeros(ng, dtype=np.float64)
    for b in range(nb):
        xi0 = bx[b] + 1
        yi0 = by[b] + 1
        xi1 = bx[b] + bw[b] - 2
        yi1 = by[b] + bh[b] - 2
        if xi1 < xi0 or yi1 < yi0:
            continue
        # mark wholly-inside groups and relax their components
        for g in range(ng):
            if gx0[g] >= xi0 and gy0[g] >= yi0 and gx1[g] <= xi1 and gy1[g] <= yi1:
                inside_stamp[g] = b
        for g in range(ng):
            if inside_stamp[g] != b:
                continue
            c = comp_id[g]
            if comp_size[c] == 1 or comp_stamp[c] == b:
                continue
            comp_stamp[c] = b
            for t in range(comp_starts[c], comp_starts[c + 1]):
                m = comp_members[t]
                best[m] = 0.0 if inside_stamp[m] == b else 1.0
            changed = True
            while changed:
                changed = False
                for t in range(comp_starts[c], comp_starts[c + 1]):
                    m = comp_members[t]
                    bm = best[m]
                    if bm <= cutoff:
                        continue
                    for e in range(indptr[m], indptr[m + 1]):
                        j = indices[e]
                        cand = bm * affs[e]
                        if cand > cutoff and cand > best[j]:
                            best[j] = cand
                            changed = True
        total = 0.0
        for g in range(ng):
            if inside_stamp[g] == b:
                if comp_size[comp_id[g]] == 1:
                    total += gmass[g]
                else:
                    total += (1.0 - best[g]) * gmass[g]
        out[b] = total
    return out


class BoxScorer:
    """Batch scorer bound to one image's edge groups and affinity graph.

    ``scores`` returns exactly what :func:`score_box` would return box by
    box; the compiled kernel performs the same relaxation in the same
    order, and the perimeter division happens identically outside it.
    """

    def __init__(self, img: ImageBuffer, params: EdgeBoxParams | None = None):
        self.params = params if params is not None else EdgeBoxParams()
        edges = detect_edges(img, self.params.edge_threshold)
        _, arrs = _group_arrays(edges)
        self.n_groups = arrs["n"]
        self._g = arrs

        n = arrs["n"]
        radius = self.params.affinity_radius
        if n == 0:
            ei = ej = np.zeros(0, dtype=np.int64)
            ea = np.zeros(0, dtype=np.float64)
        else:
            cx = np.floor(arrs["mx"] / radius).astype(np.int64)
            cy = np.floor(arrs["my"] / radius).astype(np.int64)
            cx -= cx.min()
            cy -= cy.min()
            ncx = int(cx.max()) + 1
            ncy = int(cy.max()) + 1
            key = cy * ncx + cx
            order = np.argsort(key, kind="stable").astype(np.int64)
            ncells = ncx * ncy
            starts = np.searchsorted(key[order], np.arange(ncells + 1)).astype(np.int64)
            ei, ej, ea = _affinity_edge_kernel(
                arrs["mx"], arrs["my"], arrs["mtheta"],
                key, order, starts, ncx, ncells,
                radius, self.params.gamma, self.params.chain_cutoff,
            )

        # symmetric CSR over the retained edges, neighbors ascending
        src = np.concatenate([ei, ej])
        dst = np.concatenate([ej, ei])
        aff = np.concatenate([ea, ea])
        order = np.lexsort((dst, src))
        src, dst, aff = src[order], dst[order], aff[order]
        indptr = np.searchsorted(src, np.arange(n + 1)).astype(np.int64)
        self._indptr, self._indices, self._affs = indptr, dst, aff

        # connected components of the affinity graph
        comp = np.arange(n, dtype=np.int64)

        def find(x: int) -> int:
            while comp[x] != x:
                comp[x] = comp[comp[x]]
                x = comp[x]
            return x

        for a, b in zip(ei, ej):
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                comp[rb] = ra
        roots = np.array([find(i) for i in range(n)], dtype=np.int64)
        _, comp_id = np.unique(roots, return_inverse=True)
        comp_id = comp_id.astype(np.int64)
        n_comps = int(comp_id.max()) + 1 if n else 0
        comp_size = np.bincount(comp_id, minlength=n_comps).astype(np.int64)
        member_order = np.argsort(comp_id, kind="stable").astype(np.int64)
        comp_starts = np.searchsorted(comp_id[member_order], np.arange(n_comps + 1)).astype(np.int64)
        self._comp_id, self._comp_size = comp_id, comp_size
        self._comp_starts, self._comp_members = comp_starts, member_order

    def scores(self, boxes: Sequence[BoundingBox]) -> np.ndarray:
        if not boxes:
            return np.zeros(0, dtype=np.float64)
        bx = np.fromiter((b.x for b in boxes), np.int64, len(boxes))
        by = np.fromiter((b.y for b in boxes), np.int64, len(boxes))
        bw = np.fromiter((b.w for b in boxes), np.int64, len(boxes))
        bh = np.fromiter((b.h for b in boxes), np.int64, len(boxes))
        if self.n_groups == 0:
            return np.zeros(len(boxes), dtype=np.float64)
        g = self._g
        numerators = _score_numerators_kernel(
            bx, by, bw, bh,
            g["x0"], g["y0"], g["x1"], g["y1"], g["mass"],
            self._indptr, self._indices, self._affs,
            self._comp_id, self._comp_size, self._comp_starts, self._comp_members,
            self.params.chain_cutoff,
        )
        divisors = np.array(
            [(2.0 * (b.w + b.h)) ** self.params.kappa for b in boxes], dtype=np.float64
        )
        return numerators / divisors


def generate_candidates(
    width: int, height: int, params: EdgeBoxParams | None = None
) -> list[BoundingBox]:
    """Sliding-window candidates, fully inside the image, fixed order.

    Scales grow geometrically by 1/sqrt(alpha) from the minimum side so
    consecutive same-position scales overlap at IoU ~ alpha, and slide
    steps are sized for the same overlap between neighbours.  Order is
    aspect ratio, then scale, then row, then column.
    """
    params = params if params is not None else EdgeBoxParams()
    out: list[BoundingBox] = []
    base = params.min_side_fraction * min(width, height)
    growth = 1.0 / math.sqrt(params.alpha)
    step_frac = (1.0 - params.alpha) / (1.0 + params.alpha)
    for ratio in params.aspect_ratios:
        sr = math.sqrt(ratio)
        s = base
        while True:
            wd = round_half_up(s * sr)
            hd = round_half_up(s / sr)
            if wd > width or hd > height:
                break
            if wd >= 1 and hd >= 1:
                step_x = max(1, round_half_up(wd * step_frac))
                step_y = max(1, round_half_up(hd * step_frac))
                for y in range(0, height - hd + 1, step_y):
                    for x in range(0, width - wd + 1, step_x):
                        out.append(BoundingBox(x, y, wd, hd))
            s *= growth
    return out


def nms(boxes: Sequence[ScoredBox], beta: float) -> list[ScoredBox]:
    """Greedy suppression: keep a box iff IoU < beta against all kept.

    Input must already be sorted by score descending; order is preserved.
    """
    for prev, cur in zip(boxes, boxes[1:]):
        if cur.score > prev.score:
            raise ParameterError("nms input must be sorted by score descending")
    kept: list[ScoredBox] = []
    for sb in boxes:
        if all(iou(sb.box, k.box) < beta for k in kept):
            kept.append(sb)
    return kept


@njit(cache=True)
def _nms_kernel(x, y, w, h, beta, limit):
    n = x.shape[0]
    keep = np.empty(n if n < limit else limit, dtype=np.int64)
    nk = 0
    for i in range(n):
        ok = True
        for t in range(nk):
            j = keep[t]
            ix0 = max(x[i], x[j])
            iy0 = max(y[i], y[j])
            ix1 = min(x[i] + w[i], x[j] + w[j])
            iy1 = min(y[i] + h[i], y[j] + h[j])
            iw = ix1 - ix0
            ih = iy1 - iy0
            if iw > 0 and ih > 0:
                inter = iw * ih
                if inter / (w[i] * h[i] + w[j] * h[j] - inter) >= beta:
                    ok = False
                    break
        if ok:
            keep[nk] = i
            nk += 1
            if nk >= limit:
                break
    return keep[:nk]


def edgeboxes(
    img: ImageBuffer,
    params: EdgeBoxParams | None = None,
    image_id: str = "",
) -> ProposalSet:
    """Full pipeline: detect, group, score every candidate, NMS, cap.

    Ties in score order are broken by ascending (x, y, w, h), so the
    output is deterministic regardless of how scoring was batched.
    """
    params = params if params is not None else EdgeBoxParams()
    scorer = BoxScorer(img, params)
    candidates = generate_candidates(img.width, img.height, params)
    if not candidates:
        return ProposalSet(image_id, ())
    scores = scorer.scores(candidates)
    xs = np.fromiter((b.x for b in candidates), np.int64, len(candidates))
    ys = np.fromiter((b.y for b in candidates), np.int64, len(candidates))
    ws = np.fromiter((b.w for b in candidates), np.int64, len(candidates))
    hs = np.fromiter((b.h for b in candidates), np.int64, len(candidates))
    order = np.lexsort((hs, ws, ys, xs, -scores))
    kept = _nms_kernel(
        xs[order], ys[order], ws[order], hs[order], params.beta, params.n_boxes
    )
    chosen = [int(order[i]) for i in kept]
    return ProposalSet(
        image_id,
        tuple(ScoredBox(candidates[i], float(scores[i])) for i in chosen),
    )
