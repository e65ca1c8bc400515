"""Deterministic synthetic scenes with analytically exact ground truth.

Objects are fronto-parallel textured squares placed in world coordinates
and projected through a pinhole camera, so a lateral camera move produces
true parallax: near objects slide across the frame faster than far ones.
The background is a static color patchwork (a backdrop at infinity — it
does not move with the camera), which gives the segmenter regions to chew
on and the sweeps their clutter.  Every image is a pure function of
(scene, camera, illumination, seed), and the emitted ground-truth box is
exactly the painted pixel rectangle.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import (
    BoundingBox,
    ImageBuffer,
    ParameterError,
    atomic_write_bytes,
    box_intersection_area,
    load_image,
    round_half_up,
    save_png,
)
from .evaluation import GroundTruthSet, gt_csv_bytes, read_gt_csv

__all__ = [
    "TEXTURES",
    "ObjectSpec",
    "ClutterSpec",
    "BackgroundSpec",
    "SceneSpec",
    "CameraConfig",
    "IlluminationConfig",
    "IDENTITY_ILLUMINATION",
    "NIGHT_ILLUMINATION",
    "SweepKind",
    "project_object",
    "apply_illumination",
    "render_scene",
    "make_sweep_dataset",
    "scene_to_json",
    "scene_from_json",
    "default_scene",
    "write_dataset",
    "load_dataset",
]

TEXTURES = ("flat", "checker", "stripes")

Color = tuple[int, int, int]


def _check_color(c, what: str) -> Color:
    c = tuple(int(v) for v in c)
    if len(c) != 3 or any(not 0 <= v <= 255 for v in c):
        raise ParameterError(f"{what} must be an RGB triple in 0..255")
    return c


@dataclass(frozen=True)
class ObjectSpec:
    """One world object: a textured square facing the camera.

    An object may carry a mount: a fixed-size backing plate at the same
    pose, painted behind it.  The mount is scenery, not ground truth — it
    stays at its physical size when the object is rescaled, so it is fully
    hidden behind the object at natural size and only peeks out once the
    object has shrunk past it.
    """

    object_id: str
    x: float  # lateral position, meters
    y: float  # vertical position, meters (down is positive)
    z: float  # depth, meters
    size: float  # side length, meters
    color: Color
    texture: str = "flat"
    mount: float = 0.0  # backing-plate side length, meters (0 = none)
    mount_color: Color | None = None

    def __post_init__(self) -> None:
        if self.z <= 0:
            raise ParameterError(f"object {self.object_id!r} must have depth > 0")
        if self.size <= 0:
            raise ParameterError(f"object {self.object_id!r} must have size > 0")
        if self.texture not in TEXTURES:
            raise ParameterError(f"unknown texture {self.texture!r}")
        object.__setattr__(self, "color", _check_color(self.color, "object color"))
        if self.mount < 0:
            raise ParameterError(f"object {self.object_id!r} mount size must be >= 0")
        if self.mount > 0:
            if self.mount_color is None:
                raise ParameterError(
                    f"object {self.object_id!r} has a mount but no mount color"
                )
            object.__setattr__(
                self, "mount_color", _check_color(self.mount_color, "mount color")
            )


@dataclass(frozen=True)
class ClutterSpec:
    """Backdrop patchwork: flat tiles from a palette plus per-pixel noise.

    Tiles fill the frame from row `top` downward, whole tiles only — a
    partial tile at a frame edge would be an accidental sliver, so the
    leftover margin stays plain background instead.  Noise is confined to
    the patchwork band.
    """

    tile_w: int = 40
    tile_h: int = 48
    top: int = 0
    noise_amp: int = 10
    palette: tuple[Color, ...] = (
        (150, 20, 60),
        (10, 105, 20),
        (20, 55, 200),
        (200, 185, 235),
    )

    def __post_init__(self) -> None:
        if self.tile_w < 1 or self.tile_h < 1:
            raise ParameterError("tile dimensions must be >= 1")
        if self.top < 0:
            raise ParameterError("patchwork top row must be >= 0")
        if self.noise_amp < 0:
            raise ParameterError("noise amplitude must be >= 0")
        if len(self.palette) < 2:
            raise ParameterError("palette needs at least 2 colors")
        object.__setattr__(
            self, "palette", tuple(_check_color(c, "palette color") for c in self.palette)
        )


@dataclass(frozen=True)
class BackgroundSpec:
    color: Color = (54, 57, 62)
    gradient: Color | None = None  # color of the bottom row, lerped from `color`
    clutter: ClutterSpec | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "color", _check_color(self.color, "background color"))
        if self.gradient is not None:
            object.__setattr__(
                self, "gradient", _check_color(self.gradient, "gradient color")
            )


@dataclass(frozen=True)
class SceneSpec:
    objects: tuple[ObjectSpec, ...]
    background: BackgroundSpec = BackgroundSpec()
    clutter_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        if not self.objects:
            raise ParameterError("a scene needs at least one object")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ParameterError("object ids must be unique")

    def scaled(self, factor: float) -> "SceneSpec":
        """The same scene with every object's physical size multiplied."""
        if factor <= 0:
            raise ParameterError("scale factor must be > 0")
        return replace(
            self,
            objects=tuple(replace(o, size=o.size * factor) for o in self.objects),
        )


@dataclass(frozen=True)
class CameraConfig:
    focal_length: float = 500.0  # pixels
    width: int = 640
    height: int = 480
    offset: float = 0.0  # lateral camera translation, meters

    def __post_init__(self) -> None:
        if self.focal_length <= 0:
            raise ParameterError("focal length must be > 0")
        if self.width < 1 or self.height < 1:
            raise ParameterError("frame dimensions must be >= 1")


@dataclass(frozen=True)
class IlluminationConfig:
    gain: float = 1.0
    gamma: float = 1.0
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.gain <= 0 or self.gamma <= 0:
            raise ParameterError("gain and gamma must be > 0")
        if self.noise_sigma < 0:
            raise ParameterError("noise sigma must be >= 0")


IDENTITY_ILLUMINATION = IlluminationConfig(1.0, 1.0, 0.0)
NIGHT_ILLUMINATION = IlluminationConfig(gain=0.35, gamma=1.4, noise_sigma=2.0)


@dataclass(frozen=True)
class SweepKind:
    """One condition sweep: which knob moves and through which steps."""

    name: str
    offsets_m: tuple[float, ...] = (0.0, 0.22, 0.44, 0.66, 0.88, 1.10)
    night: IlluminationConfig = NIGHT_ILLUMINATION
    scales: tuple[float, ...] = (1.0, 0.75, 0.5, 0.35, 0.25, 0.15)

    def __post_init__(self) -> None:
        if self.name not in ("viewpoint", "illumination", "size"):
            raise ParameterError(f"unknown sweep {self.name!r}")
        steps = self.scales if self.name == "size" else self.offsets_m
        if len(steps) < 2:
            raise ParameterError("a sweep needs at least 2 steps")

    @classmethod
    def named(cls, name: str) -> "SweepKind":
        return cls(name=name)


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def project_object(obj: ObjectSpec, camera: CameraConfig) -> BoundingBox | None:
    """Pinhole-project one object; None when it falls outside the frame."""
    side = camera.focal_length * obj.size / obj.z
    ccol = camera.width / 2.0 + camera.focal_length * (obj.x - camera.offset) / obj.z
    crow = camera.height / 2.0 + camera.focal_length * obj.y / obj.z
    w = round_half_up(side)
    h = round_half_up(side)
    if w < 1 or h < 1:
        return None
    x0 = round_half_up(ccol - side / 2.0)
    y0 = round_half_up(crow - side / 2.0)
    cx0, cy0 = max(x0, 0), max(y0, 0)
    cx1, cy1 = min(x0 + w, camera.width), min(y0 + h, camera.height)
    if cx1 <= cx0 or cy1 <= cy0:
        return None
    return BoundingBox(cx0, cy0, cx1 - cx0, cy1 - cy0)


# ---------------------------------------------------------------------------
# Illumination
# ---------------------------------------------------------------------------

def apply_illumination(
    img: ImageBuffer, config: IlluminationConfig, seed: int = 0
) -> ImageBuffer:
    """Gain/gamma curve plus optional additive Gaussian noise, then requantize."""
    v = img.pixels.astype(np.float64)
    out = 255.0 * config.gain * (v / 255.0) ** config.gamma
    if config.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        out = out + rng.normal(0.0, config.noise_sigma, size=out.shape)
    out = np.clip(np.floor(out + 0.5), 0.0, 255.0)
    return ImageBuffer(out.astype(np.uint8))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _alt_color(color: Color) -> np.ndarray:
    return np.maximum(np.asarray(color, np.int64) - 28, 0)


def _paint_background(canvas: np.ndarray, bg: BackgroundSpec, clutter_seed: int) -> None:
    h, w = canvas.shape[:2]
    base = np.asarray(bg.color, np.float64)
    if bg.gradient is None:
        canvas[:] = np.asarray(bg.color, np.uint8)
    else:
        top = base
        bot = np.asarray(bg.gradient, np.float64)
        t = (np.arange(h, dtype=np.float64) / max(h - 1, 1))[:, None]
        rows = np.floor(top[None, :] + t * (bot - top)[None, :] + 0.5)
        canvas[:] = rows[:, None, :].astype(np.uint8)
    if bg.clutter is None:
        return
    cl = bg.clutter
    rng = np.random.default_rng([cl.tile_w, cl.tile_h, clutter_seed & 0x7FFFFFFF])
    n_rows = max(0, (h - cl.top) // cl.tile_h)
    n_cols = w // cl.tile_w
    if n_rows == 0 or n_cols == 0:
        return
    choice = np.empty((n_rows, n_cols), np.int64)
    n_pal = len(cl.palette)
    for ti in range(n_rows):
        for tj in range(n_cols):
            banned = set()
            if tj > 0:
                banned.add(choice[ti, tj - 1])
            if ti > 0:
                banned.add(choice[ti - 1, tj])
            allowed = [k for k in range(n_pal) if k not in banned]
            choice[ti, tj] = allowed[int(rng.integers(0, len(allowed)))]
    for ti in range(n_rows):
        for tj in range(n_cols):
            y0, x0 = cl.top + ti * cl.tile_h, tj * cl.tile_w
            canvas[y0 : y0 + cl.tile_h, x0 : x0 + cl.tile_w] = np.asarray(
                cl.palette[choice[ti, tj]], np.uint8
            )
    if cl.noise_amp > 0:
        band = canvas[cl.top : cl.top + n_rows * cl.tile_h, : n_cols * cl.tile_w]
        noise = rng.integers(
            -cl.noise_amp, cl.noise_amp + 1, size=band.shape, dtype=np.int64
        )
        band[:] = np.clip(band.astype(np.int64) + noise, 0, 255).astype(np.uint8)


def _paint_object(canvas: np.ndarray, box: BoundingBox, obj: ObjectSpec) -> None:
    base = np.asarray(obj.color, np.uint8)
    patch = canvas[box.y : box.y2, box.x : box.x2]
    if obj.texture == "flat":
        patch[:] = base
        return
    alt = _alt_color(obj.color).astype(np.uint8)
    if obj.texture == "checker":
        cell = max(2, round_half_up(box.w / 8.0))
        rr = (np.arange(box.h) // cell)[:, None]
        cc = (np.arange(box.w) // cell)[None, :]
        mask = ((rr + cc) % 2 == 0)[..., None]
    else:  # stripes
        width = max(2, round_half_up(box.w / 6.0))
        cc = (np.arange(box.w) // width)[None, :]
        mask = ((cc % 2 == 0) * np.ones((box.h, 1), bool))[..., None]
    patch[:] = np.where(mask, base[None, None, :], alt[None, None, :])


def render_scene(
    spec: SceneSpec,
    camera: CameraConfig | None = None,
    illum: IlluminationConfig | None = None,
    seed: int = 0,
    image_id: str = "",
) -> tuple[ImageBuffer, GroundTruthSet]:
    """Paint the scene far-to-near, apply illumination, emit exact boxes."""
    camera = camera if camera is not None else CameraConfig()
    illum = illum if illum is not None else IDENTITY_ILLUMINATION
    projected = [(o, project_object(o, camera)) for o in spec.objects]
    visible = [(o, b) for o, b in projected if b is not None]
    if not visible:
        raise ParameterError("every object projects outside the frame")

    def footprint(o: ObjectSpec, b: BoundingBox) -> BoundingBox:
        # overlap checks must cover the mount too once it pokes out
        if o.mount <= o.size:
            return b
        mb = project_object(replace(o, size=o.mount), camera)
        return mb if mb is not None and mb.area >= b.area else b

    prints = [(o, footprint(o, b)) for o, b in visible]
    for i, (oa, ba) in enumerate(prints):
        for ob, bb in prints[i + 1 :]:
            if box_intersection_area(ba, bb) > 0:
                raise ParameterError(
                    f"objects {oa.object_id!r} and {ob.object_id!r} overlap on screen"
                )
    canvas = np.empty((camera.height, camera.width, 3), np.uint8)
    _paint_background(canvas, spec.background, spec.clutter_seed)
    for o, b in sorted(visible, key=lambda t: -t[0].z):
        if o.mount > 0:
            plate = replace(o, size=o.mount, color=o.mount_color, texture="checker")
            mb = project_object(plate, camera)
            if mb is not None:
                _paint_object(canvas, mb, plate)
        _paint_object(canvas, b, o)
    img = apply_illumination(ImageBuffer(canvas), illum, seed)
    gt = GroundTruthSet(
        image_id=image_id, objects=tuple((o.object_id, b) for o, b in visible)
    )
    return img, gt


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _image_seed(dataset_seed: int, kind: str, index: int, x: int) -> int:
    digest = hashlib.sha256(f"{dataset_seed}|{kind}|{index}|{x}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def make_sweep_dataset(
    spec: SceneSpec,
    kind: str | SweepKind,
    seed: int = 0,
    camera: CameraConfig | None = None,
) -> list[tuple[ImageBuffer, GroundTruthSet, int]]:
    """Render one sweep: a list of (image, ground truth, condition value).

    The dataset seed perturbs the backdrop layout (so several seeds give
    several scenes to average over) and feeds the per-image noise streams;
    everything is reproducible from (spec, kind, seed) alone.
    """
    kind = SweepKind.named(kind) if isinstance(kind, str) else kind
    camera = camera if camera is not None else CameraConfig()
    spec = replace(spec, clutter_seed=spec.clutter_seed + 7919 * seed)
    out: list[tuple[ImageBuffer, GroundTruthSet, int]] = []
    if kind.name in ("viewpoint", "illumination"):
        illum = IDENTITY_ILLUMINATION if kind.name == "viewpoint" else kind.night
        for i, off in enumerate(kind.offsets_m):
            x = round_half_up(off * 100.0)
            cam = replace(camera, offset=camera.offset + off)
            iid = f"{kind.name}-s{seed:04d}-x{x:03d}"
            img, gt = render_scene(
                spec, cam, illum, seed=_image_seed(seed, kind.name, i, x), image_id=iid
            )
            out.append((img, gt, x))
    else:  # size
        for i, factor in enumerate(kind.scales):
            x = i + 1
            iid = f"{kind.name}-s{seed:04d}-x{x:03d}"
            img, gt = render_scene(
                spec.scaled(factor),
                camera,
                IDENTITY_ILLUMINATION,
                seed=_image_seed(seed, kind.name, i, x),
                image_id=iid,
            )
            out.append((img, gt, x))
    return out


# ---------------------------------------------------------------------------
# Scene JSON
# ---------------------------------------------------------------------------

def _object_doc(o: ObjectSpec) -> dict:
    doc = {
        "id": o.object_id,
        "x": o.x,
        "y": o.y,
        "z": o.z,
        "size": o.size,
        "color": list(o.color),
        "texture": o.texture,
    }
    if o.mount > 0:
        doc["mount"] = o.mount
        doc["mount_color"] = list(o.mount_color)
    return doc


def scene_to_json(spec: SceneSpec) -> str:
    doc = {
        "objects": [_object_doc(o) for o in spec.objects],
        "background": {
            "color": list(spec.background.color),
            "gradient": list(spec.background.gradient)
            if spec.background.gradient
            else None,
            "clutter": {
                "tile_w": spec.background.clutter.tile_w,
                "tile_h": spec.background.clutter.tile_h,
                "top": spec.background.clutter.top,
                "noise_amp": spec.background.clutter.noise_amp,
                "palette": [list(c) for c in spec.background.clutter.palette],
            }
            if spec.background.clutter
            else None,
        },
        "clutter_seed": spec.clutter_seed,
    }
    return json.dumps(doc, indent=2) + "\n"


def scene_from_json(text: str) -> SceneSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParameterError(f"scene file is not valid JSON: {e}") from e
    try:
        objects = tuple(
            ObjectSpec(
                object_id=str(o["id"]),
                x=float(o["x"]),
                y=float(o["y"]),
                z=float(o["z"]),
                size=float(o["size"]),
                color=tuple(o["color"]),
                texture=str(o.get("texture", "flat")),
                mount=float(o.get("mount", 0.0)),
                mount_color=tuple(o["mount_color"]) if o.get("mount_color") else None,
            )
            for o in doc["objects"]
        )
        bg_doc = doc.get("background", {})
        clutter_doc = bg_doc.get("clutter")
        clutter = (
            ClutterSpec(
                tile_w=int(clutter_doc["tile_w"]),
                tile_h=int(clutter_doc["tile_h"]),
                top=int(clutter_doc.get("top", 0)),
                noise_amp=int(clutter_doc.get("noise_amp", 0)),
                palette=tuple(tuple(c) for c in clutter_doc["palette"]),
            )
            if clutter_doc
            else None
        )
        background = BackgroundSpec(
            color=tuple(bg_doc.get("color", (54, 57, 62))),
            gradient=tuple(bg_doc["gradient"]) if bg_doc.get("gradient") else None,
            clutter=clutter,
        )
        return SceneSpec(
            objects=objects,
            background=background,
            clutter_seed=int(doc.get("clutter_seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParameterError(f"scene file is malformed: {e}") from e


def default_scene() -> SceneSpec:
    """Four textured objects at depths 1–6 m above a patchwork band.

    Layout notes, all at the 640×480 default camera:

    * Vertical placement keeps the four screen boxes in disjoint row bands
      over the whole camera travel (B and D share a band but stay laterally
      clear at every offset), so the no-overlap validation holds at every
      sweep step and nothing ever leaves the frame.
    * The objects sit on plain background in the upper frame; the patchwork
      fills whole tiles from row 288 down.  Keeping the two zones apart
      means no tile is ever clipped by an object, which would otherwise
      leave fragments below the segmenter's min-size that get force-merged
      in noise-dependent directions.
    * A is bright against the dark background while B, C and D sit ~20
      luminance steps above it — enough contrast in daylight, but a dusk
      exposure compresses their outlines and stripe edges much harder than
      the bright anchor and the pale palette tiles.
    * A carries a mount plate in its own colorway, fully hidden at natural
      size; once A shrinks past it in the size sweep the plate takes over
      as the only object-sized structure the segmenter can still isolate.
    """
    return SceneSpec(
        objects=(
            ObjectSpec("A", x=1.008, y=-0.984, z=3.0, size=0.816,
                       color=(235, 235, 160), texture="checker",
                       mount=0.288, mount_color=(225, 225, 150)),
            ObjectSpec("B", x=0.306, y=-0.156, z=1.5, size=0.192,
                       color=(50, 62, 230), texture="stripes"),
            ObjectSpec("C", x=0.554, y=0.026, z=1.0, size=0.092,
                       color=(140, 30, 150), texture="stripes"),
            ObjectSpec("D", x=2.436, y=-0.66, z=6.0, size=0.552,
                       color=(150, 52, 30), texture="stripes"),
        ),
        background=BackgroundSpec(
            color=(54, 57, 62), clutter=ClutterSpec(top=288)
        ),
        clutter_seed=7,
    )


# ---------------------------------------------------------------------------
# On-disk datasets
# ---------------------------------------------------------------------------

MANIFEST_HEADER = "image_id,x,sweep,path"


def write_dataset(
    dataset: list[tuple[ImageBuffer, GroundTruthSet, int]],
    sweep: str,
    out_dir: str | Path,
) -> Path:
    """Write PNGs, gt.csv, and manifest.csv; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [MANIFEST_HEADER]
    for img, gt, x in dataset:
        name = f"{gt.image_id}.png"
        save_png(img, out / name)
        rows.append(f"{gt.image_id},{x},{sweep},{name}")
    atomic_write_bytes(out / "gt.csv", gt_csv_bytes([gt for _, gt, _ in dataset]))
    manifest = out / "manifest.csv"
    atomic_write_bytes(manifest, ("\n".join(rows) + "\n").encode("utf-8"))
    return manifest


def load_dataset(
    dataset_dir: str | Path,
) -> tuple[str, list[tuple[ImageBuffer, GroundTruthSet, int]]]:
    """Read back a dataset directory; returns (sweep name, dataset)."""
    d = Path(dataset_dir)
    manifest = d / "manifest.csv"
    if not manifest.is_file():
        raise ParameterError(f"no manifest.csv under {d}")
    lines = manifest.read_text(encoding="utf-8").strip().split("\n")
    if not lines or lines[0] != MANIFEST_HEADER:
        raise ParameterError("unrecognized manifest header")
    with open(d / "gt.csv", "rb") as fh:
        gts = {g.image_id: g for g in read_gt_csv(fh)}
    sweeps = set()
    out: list[tuple[ImageBuffer, GroundTruthSet, int]] = []
    for ln in lines[1:]:
        if not ln:
            continue
        image_id, x, sweep, path = ln.split(",")
        sweeps.add(sweep)
        if image_id not in gts:
            raise ParameterError(f"image {image_id!r} missing from gt.csv")
        out.append((load_image(d / path), gts[image_id], int(x)))
    if len(sweeps) != 1:
        raise ParameterError(f"manifest mixes sweeps: {sorted(sweeps)}")
    return sweeps.pop(), out
