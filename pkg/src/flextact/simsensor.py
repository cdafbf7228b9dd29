"""Forward model of the sensorized finger.

Renders synthetic tactile frames from (bend state, indenter geometry,
shear field) and returns the analytic ground truth alongside, so every
pipeline stage can be validated without hardware.  The shading model is
the exact inverse of the reconstruction's photometric assumption: the
point is pipeline correctness, not photorealism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Annotated, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import GeometryConfig
from .exceptions import InvalidSceneError
from .imagecore import Frame

__all__ = [
    "SphereIndenter",
    "StemIndenter",
    "ScrewheadIndenter",
    "Shear",
    "Scene",
    "GroundTruth",
    "dot_anchors",
    "marker_anchors",
    "bend_warp",
    "render",
    "render_sweep",
]

BASE_RGB = (105.0, 105.0, 105.0)
BEND_ILLUM_AMP = (20.0, 14.0, 18.0)
DOT_RGB = (240, 230, 40)
MARKER_RGB = (20, 20, 20)

# Photometric gains shared with the reconstruction inverse.
DEFAULT_ALPHA = 0.01
DEFAULT_BETA = 0.02


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SphereIndenter(_Model):
    kind: Literal["sphere"] = "sphere"
    radius_mm: float = Field(gt=0)
    depth_mm: float = Field(ge=0)
    center_mm: Optional[Tuple[float, float]] = None  # default: sensing center


class StemIndenter(_Model):
    """Long cylinder through the sensing center, e.g. a wine-glass stem."""

    kind: Literal["stem"] = "stem"
    width_mm: float = Field(gt=0)
    angle_deg: float = Field(0.0, gt=-90.0, le=90.0)
    depth_mm: float = Field(ge=0)


class ScrewheadIndenter(_Model):
    """Flat-topped disk with a steep rim, centered in the sensing region."""

    kind: Literal["screwhead"] = "screwhead"
    radius_mm: float = Field(gt=0)
    depth_mm: float = Field(ge=0)


Indenter = Annotated[
    Union[SphereIndenter, StemIndenter, ScrewheadIndenter], Field(discriminator="kind")
]


class Shear(_Model):
    dx_px: float = 0.0
    dy_px: float = 0.0
    torsion_deg: float = 0.0
    center_px: Optional[Tuple[float, float]] = None  # default: sensing center


class Scene(_Model):
    bend: float = Field(0.0, ge=0.0, le=1.0)
    indenter: Optional[Indenter] = None
    shear: Optional[Shear] = None
    noise_sigma: float = Field(0.0, ge=0.0)
    seed: int = 0


@dataclass
class GroundTruth:
    """Analytic truth consistent with the rendered frame by construction."""

    depth: np.ndarray  # z in px, full image
    gx: np.ndarray
    gy: np.ndarray
    dot_centers: np.ndarray  # after bend warp
    marker_centers: np.ndarray  # after bend drift + shear
    contact_mask: np.ndarray
    theta_true_deg: Optional[float]
    bend: float


def sensing_center(geometry: GeometryConfig) -> Tuple[float, float]:
    x0, y0, x1, y1 = geometry.sensing_region()
    return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


def dot_anchors(geometry: GeometryConfig) -> np.ndarray:
    """Nominal yellow-dot centers, tip-side band then base-side band.

    Rows carry a deterministic sub-pixel stagger (hand-painted dots are
    never perfectly aligned); with every dot at a different pixel phase,
    band-averaged centroid measurements track the bend smoothly instead
    of snapping a whole band at once.
    """
    top, bottom = geometry.dot_rows()
    n = geometry.dots_per_band
    xs = geometry.dot_margin_x + np.arange(n) * geometry.dot_pitch_px
    if xs[-1] > geometry.width - geometry.dot_margin_x:
        raise ValueError("dot band does not fit inside the image width")
    stagger = ((np.arange(n) * 5) % n) / n - 0.5
    pts = [(x, top + s) for x, s in zip(xs, stagger)] + [(x, bottom + s) for x, s in zip(xs, stagger)]
    return np.array(pts, dtype=np.float64)


def marker_anchors(geometry: GeometryConfig) -> np.ndarray:
    """Marker grid at the physical pitch, centered in the sensing region."""
    pitch = geometry.marker_pitch_px()
    x0, y0, x1, y1 = geometry.sensing_region()

    def axis(lo, hi):
        span = hi - lo
        n = max(1, int(span // pitch))
        start = lo + (span - (n - 1) * pitch) / 2.0
        return start + np.arange(n) * pitch

    xs = axis(x0, x1)
    ys = axis(y0, y1)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def bend_displacement(geometry: GeometryConfig, b: float, ys: np.ndarray) -> np.ndarray:
    """Downward pixel shift of a point at row y for bend state b.

    Quadratic in the row so tip rows (y = 0) move the most, exactly
    max_bend_px at full flex; linear in b.  The map y -> y + shift is
    strictly increasing for max_bend_px < height / 2, so the warp is
    injective.
    """
    frac = 1.0 - np.asarray(ys, dtype=np.float64) / geometry.height
    return geometry.max_bend_px * b * frac * frac


def bend_warp(geometry: GeometryConfig, b: float, points=None) -> np.ndarray:
    if not 0.0 <= b <= 1.0:
        raise ValueError("bend state must be in [0, 1]")
    pts = np.array(points if points is not None else dot_anchors(geometry), dtype=np.float64)
    pts = pts.reshape(-1, 2).copy()
    pts[:, 1] += bend_displacement(geometry, b, pts[:, 1])
    return pts


def _shear_displacement(shear: Optional[Shear], pts: np.ndarray, center) -> np.ndarray:
    disp = np.zeros_like(pts)
    if shear is None:
        return disp
    disp[:, 0] += shear.dx_px
    disp[:, 1] += shear.dy_px
    if shear.torsion_deg != 0.0:
        c = np.asarray(shear.center_px if shear.center_px is not None else center)
        ang = math.radians(shear.torsion_deg)
        rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
        disp += (pts - c) @ rot.T + c - pts
    return disp


def _indenter_field(indenter, geometry: GeometryConfig):
    """Analytic (z, gx, gy, theta_true) in pixel units over the full image."""
    h, w = geometry.height, geometry.width
    z = np.zeros((h, w))
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    if indenter is None or indenter.depth_mm == 0.0:
        return z, gx, gy, None
    ppmm = geometry.px_per_mm
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    cx, cy = sensing_center(geometry)
    theta_true = None

    if indenter.kind == "sphere":
        if indenter.center_mm is not None:
            cx, cy = indenter.center_mm[0] * ppmm, indenter.center_mm[1] * ppmm
        radius = indenter.radius_mm * ppmm
        depth = indenter.depth_mm * ppmm
        if depth > radius:
            raise InvalidSceneError("sphere depth exceeds its radius")
        a2 = radius * radius - (radius - depth) ** 2
        _require_overlap(geometry, cx, cy, math.sqrt(a2))
        r2 = (xs - cx) ** 2 + (ys - cy) ** 2
        inside = r2 < a2
        under = np.sqrt(np.maximum(radius * radius - r2, 1e-12))
        z = np.where(inside, under - (radius - depth), 0.0)
        gx = np.where(inside, -(xs - cx) / under, 0.0)
        gy = np.where(inside, -(ys - cy) / under, 0.0)
    elif indenter.kind == "stem":
        radius = 0.5 * indenter.width_mm * ppmm
        depth = indenter.depth_mm * ppmm
        if depth > radius:
            raise InvalidSceneError("stem depth exceeds its radius")
        theta_true = indenter.angle_deg
        ang = math.radians(theta_true)
        nx, ny = math.cos(ang), math.sin(ang)  # unit normal to the stem axis
        u = (xs - cx) * nx + (ys - cy) * ny
        a2 = radius * radius - (radius - depth) ** 2
        inside = u * u < a2
        under = np.sqrt(np.maximum(radius * radius - u * u, 1e-12))
        dz_du = np.where(inside, -u / under, 0.0)
        z = np.where(inside, under - (radius - depth), 0.0)
        gx = dz_du * nx
        gy = dz_du * ny
    elif indenter.kind == "screwhead":
        a = indenter.radius_mm * ppmm
        depth = indenter.depth_mm * ppmm
        _require_overlap(geometry, cx, cy, a)
        r = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
        inside = r < a
        z = np.where(inside, depth * (1.0 - (r / a) ** 6), 0.0)
        dz_dr = np.where(inside, -6.0 * depth * r**5 / a**6, 0.0)
        safe_r = np.where(r > 0, r, 1.0)
        gx = dz_dr * (xs - cx) / safe_r
        gy = dz_dr * (ys - cy) / safe_r
    else:  # pragma: no cover - pydantic keeps the union closed
        raise InvalidSceneError(f"unknown indenter kind {indenter.kind!r}")
    return z, gx, gy, theta_true


def _require_overlap(geometry: GeometryConfig, cx, cy, radius):
    x0, y0, x1, y1 = geometry.sensing_region()
    nearest_x = min(max(cx, x0), x1 - 1)
    nearest_y = min(max(cy, y0), y1 - 1)
    if math.hypot(cx - nearest_x, cy - nearest_y) > radius:
        raise InvalidSceneError("indenter footprint lies outside the sensing region")


def _stamp_disks(img: np.ndarray, centers: np.ndarray, radius: float, rgb) -> None:
    """Alpha-blend disks with a 1 px coverage ramp at the rim.

    The soft edge makes blob centroids track sub-pixel disk positions,
    which hard-edged stamping quantizes away.
    """
    h, w = img.shape[:2]
    r = int(math.ceil(radius)) + 2
    color = np.asarray(rgb, dtype=np.float64)
    for cx, cy in centers:
        x0, x1 = max(0, int(cx) - r), min(w, int(cx) + r + 2)
        y0, y1 = max(0, int(cy) - r), min(h, int(cy) + r + 2)
        if x0 >= x1 or y0 >= y1:
            continue
        xs, ys = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
        dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
        cover = np.clip(radius + 0.5 - dist, 0.0, 1.0)[..., None]
        img[y0:y1, x0:x1] = img[y0:y1, x0:x1] * (1.0 - cover) + color * cover


def render(
    scene: Scene,
    geometry: GeometryConfig,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
):
    """Render one tactile frame plus its analytic GroundTruth.

    Channel shading is R0 + gx/(2*alpha), G0 - gx/(2*alpha),
    B0 + gy/beta on top of a bend-dependent smooth illumination field;
    markers are stamped at their sheared positions and the yellow dots
    at their bend-warped positions, then seeded Gaussian noise is added
    and the result quantized.  Identical scene and seed give a
    bit-identical frame.
    """
    h, w = geometry.height, geometry.width
    z, gx, gy, theta_true = _indenter_field(scene.indenter, geometry)

    rows = np.arange(h, dtype=np.float64)
    bend_profile = scene.bend * (1.0 - rows / h) ** 2
    img = np.empty((h, w, 3), dtype=np.float64)
    for c in range(3):
        img[..., c] = BASE_RGB[c] + BEND_ILLUM_AMP[c] * bend_profile[:, None]
    img[..., 0] += gx / (2.0 * alpha)
    img[..., 1] -= gx / (2.0 * alpha)
    img[..., 2] += gy / beta

    center = sensing_center(geometry)
    anchors = marker_anchors(geometry)
    drift = geometry.marker_bend_factor * bend_displacement(geometry, scene.bend, anchors[:, 1])
    marker_centers = anchors + np.stack([np.zeros(len(anchors)), drift], axis=1)
    marker_centers = marker_centers + _shear_displacement(scene.shear, marker_centers, center)
    _stamp_disks(img, marker_centers, geometry.marker_radius_px(), MARKER_RGB)

    dot_centers = bend_warp(geometry, scene.bend)
    _stamp_disks(img, dot_centers, geometry.dot_radius_px, DOT_RGB)

    if scene.noise_sigma > 0.0:
        rng = np.random.default_rng(scene.seed)
        img += rng.normal(0.0, scene.noise_sigma, img.shape)

    frame = Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    truth = GroundTruth(
        depth=z,
        gx=gx,
        gy=gy,
        dot_centers=dot_centers,
        marker_centers=marker_centers,
        contact_mask=z > 0.0,
        theta_true_deg=theta_true,
        bend=scene.bend,
    )
    return frame, truth


def render_sweep(geometry: GeometryConfig, n_states: int, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA):
    """No-contact, no-shear frames over an even bend grid (library input)."""
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    bends = [0.0] if n_states == 1 else np.linspace(0.0, 1.0, n_states)
    return [render(Scene(bend=float(b)), geometry, alpha, beta)[0] for b in bends]
