"""Quality metric, sweep aggregation, CSV artifacts, and the SVG plotter.

The metric is deliberately simple: per ground-truth object take the best
IOU any proposal achieves, then average over the objects of the image.
Sweeps aggregate those per-image values per condition step, which gives
one curve per method to compare robustness across methods.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import BinaryIO, Callable, Iterable, Sequence

from .combination import CombinationParams, combine_scored
from .core import (
    BoundingBox,
    ImageBuffer,
    ParameterError,
    ProposalSet,
    ScoredBox,
    iou,
)
from .edgeboxes import EdgeBoxParams, edgeboxes, generate_candidates
from .segmentation import SegmentationParams
from .selective_search import selective_search

__all__ = [
    "METHOD_NAMES",
    "SWEEP_NAMES",
    "GroundTruthSet",
    "QualityPoint",
    "QualityCurve",
    "MethodParams",
    "ImageRun",
    "image_quality",
    "run_method",
    "sweep_evaluate",
    "sweep_evaluate_detailed",
    "write_quality_csv",
    "read_quality_csv",
    "write_gt_csv",
    "read_gt_csv",
    "write_proposals_csv",
    "read_proposals_csv",
    "render_svg_plot",
]

METHOD_NAMES = ("combination", "edgeboxes", "selective-search")
SWEEP_NAMES = ("viewpoint", "illumination", "size")


@dataclass(frozen=True)
class GroundTruthSet:
    """Annotated objects of one image: (object_id, box) pairs."""

    image_id: str
    objects: tuple[tuple[str, BoundingBox], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(tuple(o) for o in self.objects))
        ids = [oid for oid, _ in self.objects]
        if len(set(ids)) != len(ids):
            raise ParameterError(f"duplicate object ids in image {self.image_id!r}")
        for oid, box in self.objects:
            if not isinstance(box, BoundingBox):
                raise ParameterError(f"object {oid!r} has no bounding box")


@dataclass(frozen=True)
class QualityPoint:
    x: int
    quality: float
    n_objects: int
    n_images: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.quality <= 1.0:
            raise ParameterError("quality must lie in [0, 1]")
        if self.n_objects < 1 or self.n_images < 1:
            raise ParameterError("counts must be >= 1")


@dataclass(frozen=True)
class QualityCurve:
    method: str
    sweep: str
    points: tuple[QualityPoint, ...]

    def __post_init__(self) -> None:
        if self.method not in METHOD_NAMES:
            raise ParameterError(f"unknown method {self.method!r}")
        if self.sweep not in SWEEP_NAMES:
            raise ParameterError(f"unknown sweep {self.sweep!r}")
        object.__setattr__(self, "points", tuple(self.points))
        xs = [p.x for p in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ParameterError("points must be strictly increasing in x")


# ---------------------------------------------------------------------------
# The metric
# ---------------------------------------------------------------------------

def image_quality(
    proposals: ProposalSet, gt: GroundTruthSet
) -> tuple[float, dict[str, float]]:
    """Mean over objects of the best IOU any proposal reaches.

    Only geometry matters: scores and ordering of the proposals are
    irrelevant, and every proposal competes for every object.
    """
    if proposals.image_id != gt.image_id:
        raise ParameterError(
            f"proposals are for {proposals.image_id!r}, "
            f"ground truth for {gt.image_id!r}"
        )
    if not gt.objects:
        raise ParameterError(f"image {gt.image_id!r} has no annotated objects")
    per_object: dict[str, float] = {}
    for oid, box in gt.objects:
        best = 0.0
        for sb in proposals.boxes:
            v = iou(box, sb.box)
            if v > best:
                best = v
        per_object[oid] = best
    return sum(per_object.values()) / len(per_object), per_object


# ---------------------------------------------------------------------------
# Method dispatch
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodParams:
    """Per-method knobs used by the sweep harness.

    ``ss_n_boxes`` caps the ranked selective-search output; the number of
    hypotheses it *ranked* is still reported as the work done.
    """

    seg: SegmentationParams = SegmentationParams()
    eb: EdgeBoxParams = EdgeBoxParams()
    ss_n_boxes: int = 100
    comb_n_boxes: int = 50

    def __post_init__(self) -> None:
        if self.ss_n_boxes < 1 or self.comb_n_boxes < 1:
            raise ParameterError("box caps must be >= 1")


@dataclass(frozen=True)
class ImageRun:
    """Per-image record behind one point: the work done and the outcome."""

    image_id: str
    x: int
    quality: float
    boxes_scored: int
    wall_ms: float
    n_objects: int


ProposalFn = Callable[[ImageBuffer, str], ProposalSet]


def run_method(
    method: str, img: ImageBuffer, image_id: str, params: MethodParams
) -> tuple[ProposalSet, int]:
    """Run one proposal method; also report how many boxes it scored."""
    if method == "selective-search":
        full = selective_search(img, params.seg, None, image_id)
        return full.truncated(params.ss_n_boxes), len(full)
    if method == "edgeboxes":
        out = edgeboxes(img, params.eb, image_id)
        return out, len(generate_candidates(img.width, img.height, params.eb))
    if method == "combination":
        cp = CombinationParams(seg=params.seg, eb=params.eb, n_boxes=params.comb_n_boxes)
        return combine_scored(img, cp, image_id)
    raise ParameterError(f"unknown method {method!r}")


def _run_one(args) -> tuple[int, float, int, float, int]:
    idx, method, img, gt, params = args
    t0 = time.perf_counter()
    if callable(method):
        proposals = method(img, gt.image_id)
        scored = len(proposals)
    else:
        proposals, scored = run_method(method, img, gt.image_id, params)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    quality, _ = image_quality(proposals, gt)
    return idx, quality, scored, wall_ms, len(gt.objects)


def sweep_evaluate_detailed(
    dataset: Sequence[tuple[ImageBuffer, GroundTruthSet, int]],
    method: str | ProposalFn,
    params: MethodParams | None = None,
    *,
    sweep: str = "viewpoint",
    threads: int = 1,
    method_name: str | None = None,
) -> tuple[QualityCurve, list[ImageRun]]:
    """Evaluate one method over a sweep dataset; keep per-image records.

    The curve is identical regardless of ``threads``: per-image results are
    reassembled by index and reduced in sorted image-id order.  A callable
    method (useful as a stub in tests) runs serially and must be paired
    with ``method_name`` to label the curve.
    """
    if not dataset:
        raise ParameterError("dataset is empty")
    if isinstance(method, str) and method not in METHOD_NAMES:
        raise ParameterError(f"unknown method {method!r}")
    if callable(method) and method_name is None:
        raise ParameterError("a callable method needs an explicit method_name")
    params = params if params is not None else MethodParams()
    jobs = [(i, method, img, gt, params) for i, (img, gt, _) in enumerate(dataset)]
    if threads > 1 and not callable(method):
        with ProcessPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(_run_one, jobs))
    else:
        raw = [_run_one(j) for j in jobs]
    raw.sort(key=lambda r: r[0])

    runs = [
        ImageRun(
            image_id=dataset[i][1].image_id,
            x=dataset[i][2],
            quality=q,
            boxes_scored=scored,
            wall_ms=wall,
            n_objects=nobj,
        )
        for i, q, scored, wall, nobj in raw
    ]
    by_x: dict[int, list[ImageRun]] = {}
    for r in runs:
        by_x.setdefault(r.x, []).append(r)
    points = []
    for x in sorted(by_x):
        group = sorted(by_x[x], key=lambda r: r.image_id)
        mean = sum(r.quality for r in group) / len(group)
        points.append(
            QualityPoint(
                x=x,
                quality=mean,
                n_objects=sum(r.n_objects for r in group),
                n_images=len(group),
            )
        )
    name = method if isinstance(method, str) else method_name
    return QualityCurve(method=name, sweep=sweep, points=tuple(points)), runs


def sweep_evaluate(
    dataset: Sequence[tuple[ImageBuffer, GroundTruthSet, int]],
    method: str | ProposalFn,
    params: MethodParams | None = None,
    *,
    sweep: str = "viewpoint",
    threads: int = 1,
    method_name: str | None = None,
) -> QualityCurve:
    return sweep_evaluate_detailed(
        dataset, method, params, sweep=sweep, threads=threads, method_name=method_name
    )[0]


# ---------------------------------------------------------------------------
# CSV artifacts
# ---------------------------------------------------------------------------

QUALITY_HEADER = "method,sweep,x,quality,n_objects,n_images"
GT_HEADER = "image_id,object_id,x,y,w,h"
PROPOSALS_HEADER = "image_id,rank,score,x,y,w,h"


def quality_csv_bytes(curves: Iterable[QualityCurve]) -> bytes:
    rows = []
    for c in curves:
        for p in c.points:
            rows.append((c.method, c.sweep, p.x, p.quality, p.n_objects, p.n_images))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    lines = [QUALITY_HEADER]
    lines += [f"{m},{s},{x},{q:.6f},{no},{ni}" for m, s, x, q, no, ni in rows]
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_quality_csv(curves: Iterable[QualityCurve], sink: BinaryIO) -> None:
    sink.write(quality_csv_bytes(curves))


def read_quality_csv(source: BinaryIO) -> list[QualityCurve]:
    text = source.read().decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != QUALITY_HEADER.split(","):
        raise ParameterError("unrecognized quality CSV header")
    grouped: dict[tuple[str, str], list[QualityPoint]] = {}
    for row in reader:
        if not row:
            continue
        m, s, x, q, no, ni = row
        grouped.setdefault((m, s), []).append(
            QualityPoint(x=int(x), quality=float(q), n_objects=int(no), n_images=int(ni))
        )
    return [
        QualityCurve(method=m, sweep=s, points=tuple(sorted(pts, key=lambda p: p.x)))
        for (m, s), pts in sorted(grouped.items())
    ]


def gt_csv_bytes(gts: Iterable[GroundTruthSet]) -> bytes:
    lines = [GT_HEADER]
    for gt in gts:
        for oid, b in gt.objects:
            lines.append(f"{gt.image_id},{oid},{b.x},{b.y},{b.w},{b.h}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_gt_csv(gts: Iterable[GroundTruthSet], sink: BinaryIO) -> None:
    sink.write(gt_csv_bytes(gts))


def read_gt_csv(source: BinaryIO) -> list[GroundTruthSet]:
    text = source.read().decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != GT_HEADER.split(","):
        raise ParameterError("unrecognized ground-truth CSV header")
    grouped: dict[str, list[tuple[str, BoundingBox]]] = {}
    for row in reader:
        if not row:
            continue
        image_id, oid, x, y, w, h = row
        grouped.setdefault(image_id, []).append(
            (oid, BoundingBox(int(x), int(y), int(w), int(h)))
        )
    return [
        GroundTruthSet(image_id=i, objects=tuple(objs)) for i, objs in grouped.items()
    ]


def proposals_csv_bytes(sets: Iterable[ProposalSet]) -> bytes:
    lines = [PROPOSALS_HEADER]
    for ps in sets:
        for rank, sb in enumerate(ps.boxes):
            b = sb.box
            lines.append(
                f"{ps.image_id},{rank},{sb.score:.6f},{b.x},{b.y},{b.w},{b.h}"
            )
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_proposals_csv(sets: Iterable[ProposalSet], sink: BinaryIO) -> None:
    sink.write(proposals_csv_bytes(sets))


def read_proposals_csv(source: BinaryIO) -> list[ProposalSet]:
    """Rebuild proposal sets; order is re-canonicalized after 6-decimal rounding."""
    text = source.read().decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != PROPOSALS_HEADER.split(","):
        raise ParameterError("unrecognized proposals CSV header")
    grouped: dict[str, list] = {}
    for row in reader:
        if not row:
            continue
        image_id, _rank, score, x, y, w, h = row
        grouped.setdefault(image_id, []).append(
            ScoredBox(BoundingBox(int(x), int(y), int(w), int(h)), float(score))
        )
    return [ProposalSet.from_scored(i, scored) for i, scored in grouped.items()]


# ---------------------------------------------------------------------------
# SVG plot
# ---------------------------------------------------------------------------

_CURVE_COLORS = {
    "combination": "#2ca02c",
    "edgeboxes": "#d62728",
    "selective-search": "#1f77b4",
}
_X_AXIS_LABEL = {
    "viewpoint": "camera displacement (cm)",
    "illumination": "illumination step (cm offset, night preset)",
    "size": "object size rank (largest to smallest)",
}

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 30, 50, 60


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_plot_bytes(curves: Sequence[QualityCurve], title: str) -> bytes:
    if not curves:
        raise ParameterError("nothing to plot")
    sweeps = {c.sweep for c in curves}
    if len(sweeps) != 1:
        raise ParameterError(f"curves mix sweeps: {sorted(sweeps)}")
    sweep = curves[0].sweep
    curves = sorted(curves, key=lambda c: c.method)

    xs = sorted({p.x for c in curves for p in c.points})
    x_lo, x_hi = xs[0], xs[-1]
    span = (x_hi - x_lo) or 1
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def px(x: int) -> float:
        if x_hi == x_lo:
            return _ML + plot_w / 2.0
        return _ML + (x - x_lo) * plot_w / span

    def py(q: float) -> float:
        return _MT + (1.0 - q) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.2f}" y="28" font-size="16" text-anchor="middle" '
        f'font-family="sans-serif">{_esc(title)}</text>',
    ]
    # horizontal gridlines at 0, 0.25, .., 1 with y labels
    for i in range(5):
        q = i / 4.0
        y = py(q)
        out.append(
            f'<line x1="{_ML}" y1="{y:.2f}" x2="{_W - _MR}" y2="{y:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_ML - 8}" y="{y + 4:.2f}" font-size="11" text-anchor="end" '
            f'font-family="sans-serif">{q:.2f}</text>'
        )
    # x ticks
    for x in xs:
        cx = px(x)
        out.append(
            f'<line x1="{cx:.2f}" y1="{_H - _MB}" x2="{cx:.2f}" y2="{_H - _MB + 5}" '
            f'stroke="#333333" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{cx:.2f}" y="{_H - _MB + 18}" font-size="11" '
            f'text-anchor="middle" font-family="sans-serif">{x}</text>'
        )
    # axes
    out.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
        f'stroke="#333333" stroke-width="1"/>'
    )
    out.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        f'stroke="#333333" stroke-width="1"/>'
    )
    out.append(
        f'<text x="{_ML + plot_w / 2:.2f}" y="{_H - 16}" font-size="13" '
        f'text-anchor="middle" font-family="sans-serif">'
        f"{_esc(_X_AXIS_LABEL[sweep])}</text>"
    )
    out.append(
        f'<text x="20" y="{_MT + plot_h / 2:.2f}" font-size="13" '
        f'text-anchor="middle" font-family="sans-serif" '
        f'transform="rotate(-90 20 {_MT + plot_h / 2:.2f})">mean best IOU</text>'
    )
    # curves
    for c in curves:
        color = _CURVE_COLORS.get(c.method, "#777777")
        pts = " ".join(f"{px(p.x):.2f},{py(p.quality):.2f}" for p in c.points)
        out.append(
            f'<polyline class="curve" points="{pts}" fill="none" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        for p in c.points:
            out.append(
                f'<circle cx="{px(p.x):.2f}" cy="{py(p.quality):.2f}" r="3" '
                f'fill="{color}"/>'
            )
    # legend
    for i, c in enumerate(curves):
        color = _CURVE_COLORS.get(c.method, "#777777")
        ly = _MT + 14 + i * 18
        lx = _W - _MR - 150
        out.append(
            f'<line class="legend-swatch" x1="{lx}" y1="{ly}" x2="{lx + 24}" '
            f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{lx + 30}" y="{ly + 4}" font-size="12" '
            f'font-family="sans-serif">{_esc(c.method)}</text>'
        )
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def render_svg_plot(curves: Sequence[QualityCurve], title: str, sink: BinaryIO) -> None:
    sink.write(svg_plot_bytes(curves, title))
