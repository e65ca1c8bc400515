"""Core value types shared by every stage: boxes, scored proposals, images."""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError


class DecodeError(ValueError):
    """Raised when an image file exists but cannot be decoded."""


class ParameterError(ValueError):
    """Raised when an argument violates a documented precondition."""


def round_half_up(x: float) -> int:
    """Round with .5 always going up, unlike banker's rounding."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Axis-aligned integer box covering the half-open region [x, x+w) x [y, y+h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ParameterError(f"box field {name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.w <= 0 or self.h <= 0:
            raise ParameterError(f"box sides must be positive, got w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise ParameterError(f"box origin must be non-negative, got x={self.x} y={self.y}")

    @property
    def x2(self) -> int:
        """First column to the right of the box (exclusive)."""
        return self.x + self.w

    @property
    def y2(self) -> int:
        """First row below the box (exclusive)."""
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def union_bbox(self, other: "BoundingBox") -> "BoundingBox":
        """Tightest box covering both boxes."""
        x1 = min(self.x, other.x)
        y1 = min(self.y, other.y)
        x2 = max(self.x2, other.x2)
        y2 = max(self.y2, other.y2)
        return BoundingBox(x1, y1, x2 - x1, y2 - y1)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


def box_intersection_area(a: BoundingBox, b: BoundingBox) -> int:
    """Exact pixel count of the overlap of two half-open boxes."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; areas stay in integer arithmetic until the final division."""
    inter = box_intersection_area(a, b)
    if inter == 0:
        return 0.0
    union = a.area + b.area - inter
    return inter / union


@dataclass(frozen=True)
class ScoredBox:
    """A proposal box plus the score its generator assigned."""

    box: BoundingBox
    score: float

    def __post_init__(self) -> None:
        s = float(self.score)
        if not np.isfinite(s) or s < 0.0:
            raise ParameterError(f"score must be finite and >= 0, got {self.score!r}")
        object.__setattr__(self, "score", s)


def _proposal_sort_key(sb: ScoredBox) -> tuple:
    b = sb.box
    return (-sb.score, b.x, b.y, b.w, b.h)


@dataclass(frozen=True)
class ProposalSet:
    """Proposals for one image, sorted by score descending.

    Ties are broken by ascending (x, y, w, h) and exact duplicates are not
    allowed; use :meth:`from_scored` to build one from unordered input.
    """

    image_id: str
    boxes: tuple[ScoredBox, ...]

    def __post_init__(self) -> None:
        keys = [_proposal_sort_key(sb) for sb in self.boxes]
        for prev, cur in zip(keys, keys[1:]):
            if cur < prev:
                raise ParameterError("proposal set is not in canonical order")
        seen = set()
        for sb in self.boxes:
            entry = (sb.box.as_tuple(), sb.score)
            if entry in seen:
                raise ParameterError(f"duplicate proposal entry {entry}")
            seen.add(entry)

    @classmethod
    def from_scored(cls, image_id: str, scored: Iterable[ScoredBox]) -> "ProposalSet":
        """Sort into canonical order and drop exact (box, score) duplicates."""
        unique: dict[tuple, ScoredBox] = {}
        for sb in scored:
            unique.setdefault((sb.box.as_tuple(), sb.score), sb)
        ordered = sorted(unique.values(), key=_proposal_sort_key)
        return cls(image_id=image_id, boxes=tuple(ordered))

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    def truncated(self, n: int) -> "ProposalSet":
        """Keep the first n proposals (canonical order is preserved)."""
        if n < 0:
            raise ParameterError("truncation length must be >= 0")
        return ProposalSet(self.image_id, self.boxes[:n])


@dataclass(frozen=True)
class ImageBuffer:
    """Immutable 8-bit RGB raster, shape (height, width, 3), row-major."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ParameterError(f"pixels must have shape (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DecodeError("image has a zero dimension")
        if px.dtype != np.uint8:
            raise ParameterError(f"pixels must be uint8, got {px.dtype}")
        if px.flags.writeable:
            px = px.copy()
            px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def bounds(self) -> BoundingBox:
        return BoundingBox(0, 0, self.width, self.height)


def _parse_ppm(data: bytes) -> np.ndarray:
    """Parse binary PPM (P6); comments and arbitrary whitespace are legal in the header."""
    if not data.startswith(b"P6"):
        raise DecodeError("not a P6 ppm file")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] not in (0x0A, 0x0D):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise DecodeError("malformed ppm header")
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise DecodeError("malformed ppm header")
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DecodeError("image has a zero dimension")
    if maxval != 255:
        raise DecodeError(f"unsupported ppm maxval {maxval}")
    need = width * height * 3
    raster = data[pos : pos + need]
    if len(raster) != need:
        raise DecodeError("truncated ppm raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)


def load_image(path: str | os.PathLike) -> ImageBuffer:
    """Load a PNG or binary PPM file as 8-bit RGB.

    Grayscale and paletted PNGs are expanded to RGB; an alpha channel is dropped.
    """
    p = Path(path)
    data = p.read_bytes()  # propagates OSError for unreadable paths
    if data[:2] == b"P6":
        return ImageBuffer(_parse_ppm(data))
    try:
        with Image.open(io.BytesIO(data)) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{p}: not a decodable PNG or P6 ppm") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{p}: {exc}") from exc
    if arr.ndim != 3:
        raise DecodeError(f"{p}: unexpected raster shape {arr.shape}")
    return ImageBuffer(arr)


def save_png(img: ImageBuffer, path: str | os.PathLike) -> None:
    """Write an ImageBuffer as PNG (atomically: temp file + rename)."""
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img.pixels)).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write a file so that the target path never holds partial content."""
    p = Path(path)
    tmp = p.with_name(f".{p.name}.{os.getpid()}.tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, p)
    except BaseException:
        if tmp.exists():
            tmp.unlink()
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
