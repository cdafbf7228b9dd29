"""Raster types and the image-processing primitives used by every stage.

Conventions: a color frame is an (H, W, 3) uint8 array in RGB order with
the origin at the top-left corner; x is the column index increasing
rightward and y the row index increasing downward.  Row 0 is the tip end
of the finger, which fixes the angle convention used downstream.  Gray
images are 2-D float arrays, binary masks 2-D bool arrays, both with the
same dimensions as the frame they came from.

All functions here are pure; none keeps internal state, so concurrent
calls on shared immutable arrays are safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from . import netpbm

__all__ = [
    "Frame",
    "Blob",
    "to_hsv",
    "hsv_to_frame",
    "to_lab_luminosity",
    "threshold_hsv",
    "disk_element",
    "morph_open",
    "morph_close",
    "median_blur",
    "connected_components",
]

_EIGHT_CONN = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class Frame:
    """One 8-bit RGB tactile image."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.dtype != np.uint8 or d.ndim != 3 or d.shape[2] != 3:
            raise ValueError("Frame.data must be an (H, W, 3) uint8 array")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_ppm(cls, source) -> "Frame":
        return cls(netpbm.read_ppm(source))

    def to_ppm(self, dest) -> None:
        netpbm.write_ppm(dest, self.data)

    def ppm_bytes(self) -> bytes:
        return netpbm.ppm_bytes(self.data)

    @classmethod
    def filled(cls, width: int, height: int, rgb=(0, 0, 0)) -> "Frame":
        data = np.empty((height, width, 3), dtype=np.uint8)
        data[:] = np.asarray(rgb, dtype=np.uint8)
        return cls(data)


@dataclass(frozen=True)
class Blob:
    """A connected region: sub-pixel centroid, pixel area, inclusive bbox."""

    centroid: tuple  # (x, y)
    area: int
    bbox: tuple  # (x_min, y_min, x_max, y_max), inclusive


def to_hsv(frame: Frame) -> np.ndarray:
    """RGB -> HSV with H in [0, 360) and S, V in [0, 1]."""
    rgb = frame.data.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    cmax = rgb.max(axis=-1)
    delta = cmax - rgb.min(axis=-1)
    nz = delta > 0
    rmax = nz & (r >= g) & (r >= b)
    gmax = nz & ~rmax & (g >= b)
    bmax = nz & ~rmax & ~gmax
    h = np.zeros_like(cmax)
    h[rmax] = (60.0 * (g[rmax] - b[rmax]) / delta[rmax]) % 360.0
    h[gmax] = 60.0 * (b[gmax] - r[gmax]) / delta[gmax] + 120.0
    h[bmax] = 60.0 * (r[bmax] - g[bmax]) / delta[bmax] + 240.0
    s = np.where(cmax > 0, delta / np.where(cmax > 0, cmax, 1.0), 0.0)
    return np.stack([h, s, cmax], axis=-1)


def hsv_to_frame(hsv: np.ndarray) -> Frame:
    """Inverse of to_hsv; reproduces the source frame within one level."""
    h = np.mod(hsv[..., 0], 360.0) / 60.0
    s = hsv[..., 1]
    v = hsv[..., 2]
    c = v * s
    x = c * (1.0 - np.abs(np.mod(h, 2.0) - 1.0))
    m = v - c
    sector = np.floor(h).astype(int) % 6
    z = np.zeros_like(c)
    r = np.choose(sector, [c, x, z, z, x, c])
    g = np.choose(sector, [x, c, c, x, z, z])
    b = np.choose(sector, [z, z, x, c, c, x])
    rgb = np.stack([r, g, b], axis=-1) + m[..., None]
    return Frame(np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8))


def to_lab_luminosity(frame: Frame) -> np.ndarray:
    """CIE L* channel (D65, sRGB primaries) scaled to [0, 100]."""
    srgb = frame.data.astype(np.float64) / 255.0
    lin = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    y = lin[..., 0] * 0.2126 + lin[..., 1] * 0.7152 + lin[..., 2] * 0.0722
    eps = (6.0 / 29.0) ** 3
    fy = np.where(y > eps, np.cbrt(y), y / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    return 116.0 * fy - 16.0


def threshold_hsv(hsv: np.ndarray, lo, hi) -> np.ndarray:
    """Mask of pixels inside the HSV window.

    The hue interval wraps through 0 when lo[0] > hi[0]; saturation and
    value bounds are plain inclusive ranges.
    """
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h_lo, s_lo, v_lo = lo
    h_hi, s_hi, v_hi = hi
    if h_lo <= h_hi:
        h_ok = (h >= h_lo) & (h <= h_hi)
    else:
        h_ok = (h >= h_lo) | (h <= h_hi)
    return h_ok & (s >= s_lo) & (s <= s_hi) & (v >= v_lo) & (v <= v_hi)


def disk_element(radius: int) -> np.ndarray:
    if radius < 1:
        raise ValueError("structuring element radius must be >= 1")
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx * xx + yy * yy) <= radius * radius


def morph_open(mask: np.ndarray, radius: int) -> np.ndarray:
    return ndimage.binary_opening(mask, structure=disk_element(radius))


def morph_close(mask: np.ndarray, radius: int) -> np.ndarray:
    return ndimage.binary_closing(mask, structure=disk_element(radius))


def median_blur(img: np.ndarray, kernel: int) -> np.ndarray:
    """Window median with edge replication at the borders.

    uint8 input takes the O(1)-per-pixel histogram path (cv2), which is
    bit-identical to the generic path; float input uses the exact
    scipy filter.  Kernel must be odd and >= 3.
    """
    if kernel < 3 or kernel % 2 == 0:
        raise ValueError("median kernel must be odd and >= 3")
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("median_blur expects a single-channel image")
    if img.dtype == np.uint8:
        return cv2.medianBlur(np.ascontiguousarray(img), kernel)
    return ndimage.median_filter(img, size=kernel, mode="nearest")


def connected_components(mask: np.ndarray, min_area: int = 1, max_area=None):
    """8-connected regions with area in [min_area, max_area] as Blobs.

    Centroids are unweighted means of member pixel coordinates; output
    is sorted by (centroid y, centroid x) so downstream matching is
    reproducible.
    """
    labels, n = ndimage.label(mask, structure=_EIGHT_CONN)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel())
    slices = ndimage.find_objects(labels)
    centroids = ndimage.center_of_mass(mask, labels, index=np.arange(1, n + 1))
    blobs = []
    for i in range(1, n + 1):
        area = int(areas[i])
        if area < min_area or (max_area is not None and area > max_area):
            continue
        cy, cx = centroids[i - 1]
        sy, sx = slices[i - 1]
        blobs.append(
            Blob(
                centroid=(float(cx), float(cy)),
                area=area,
                bbox=(int(sx.start), int(sy.start), int(sx.stop - 1), int(sy.stop - 1)),
            )
        )
    blobs.sort(key=lambda blob: (blob.centroid[1], blob.centroid[0]))
    return blobs
