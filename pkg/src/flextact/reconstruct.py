"""Uncalibrated depth reconstruction from live/reference frame pairs.

The illumination scheme fluoresces red and green from opposite sides
across the width and blue along the length, so after subtracting the
matched no-contact reference, the channel differences are linear in the
surface gradient: gx ~ alpha*(dR - dG), gy ~ beta*dB.  Integrating that
field with a Poisson solve gives relative depth; the scale stays
arbitrary (no photometric calibration target exists).

Everything here is a pure transformation; the solver keeps no state
between calls, so frames may be reconstructed concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dstn, idstn

from . import netpbm
from .config import Config
from .dotref import ReferenceLibrary, match_reference
from .exceptions import DimensionMismatchError, UnsupportedRegionError
from .imagecore import Frame

__all__ = [
    "GradientField",
    "DepthMap",
    "difference_image",
    "gradients_from_difference",
    "poisson_integrate",
    "reconstruct",
    "export_depth_pgm",
    "export_gradient_pgm",
]


@dataclass
class GradientField:
    gx: np.ndarray  # dz/dx, uncalibrated units
    gy: np.ndarray  # dz/dy


@dataclass
class DepthMap:
    """Relative depth with z = 0 pinned on the valid-region boundary."""

    z: np.ndarray
    valid_mask: np.ndarray
    low_confidence: bool = False


def difference_image(live: Frame, ref: Frame) -> np.ndarray:
    """Signed per-channel difference after mean alignment.

    Subtracting each channel's global mean offset absorbs uniform
    illumination drift between capture sessions; values are clamped to
    [-255, 255].
    """
    if live.data.shape != ref.data.shape:
        raise DimensionMismatchError(
            f"live {live.data.shape} vs reference {ref.data.shape}"
        )
    d = live.data.astype(np.float64) - ref.data.astype(np.float64)
    d -= d.mean(axis=(0, 1), keepdims=True)
    return np.clip(d, -255.0, 255.0)


def gradients_from_difference(d: np.ndarray, alpha: float, beta: float) -> GradientField:
    """Linear photometric inverse of the two-sided illumination."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    gx = alpha * (d[..., 0] - d[..., 1])
    gy = beta * d[..., 2]
    return GradientField(gx=gx, gy=gy)


def _mask_rectangle(mask: np.ndarray):
    """Bounds of a filled rectangular mask, or raise."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if len(rows) == 0:
        raise UnsupportedRegionError("mask is empty")
    y0, y1 = int(rows[0]), int(rows[-1]) + 1
    x0, x1 = int(cols[0]), int(cols[-1]) + 1
    if not mask[y0:y1, x0:x1].all() or mask.sum() != (y1 - y0) * (x1 - x0):
        raise UnsupportedRegionError("mask region must be a single filled rectangle")
    return x0, y0, x1, y1


def poisson_integrate(g: GradientField, mask: np.ndarray) -> DepthMap:
    """Solve lap(z) = div(g) on the rectangle with z = 0 on its boundary.

    Divergence uses central differences; the 5-point Laplacian system is
    diagonalized by the type-I discrete sine transform, so the solve is
    direct and the relative residual lands at floating-point level (well
    under the 1e-6 contract).
    """
    if g.gx.shape != g.gy.shape or g.gx.shape != mask.shape:
        raise DimensionMismatchError("gradient components and mask must share dimensions")
    if not (np.isfinite(g.gx).all() and np.isfinite(g.gy).all()):
        raise ValueError("gradient field must be finite")
    x0, y0, x1, y1 = _mask_rectangle(mask)
    z = np.zeros(mask.shape, dtype=np.float64)
    m, n = y1 - y0, x1 - x0
    if m >= 3 and n >= 3:
        gx = g.gx[y0:y1, x0:x1]
        gy = g.gy[y0:y1, x0:x1]
        div = 0.5 * (gx[1:-1, 2:] - gx[1:-1, :-2]) + 0.5 * (gy[2:, 1:-1] - gy[:-2, 1:-1])
        rhs = dstn(div, type=1, norm="ortho")
        ii = np.arange(1, m - 1)
        jj = np.arange(1, n - 1)
        lam_y = 2.0 * np.cos(np.pi * ii / (m - 1)) - 2.0
        lam_x = 2.0 * np.cos(np.pi * jj / (n - 1)) - 2.0
        denom = lam_y[:, None] + lam_x[None, :]
        z[y0 + 1 : y1 - 1, x0 + 1 : x1 - 1] = idstn(rhs / denom, type=1, norm="ortho")
    return DepthMap(z=z, valid_mask=mask.astype(bool))


def sensing_mask(cfg: Config) -> np.ndarray:
    x0, y0, x1, y1 = cfg.geometry.sensing_region()
    mask = np.zeros((cfg.geometry.height, cfg.geometry.width), dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


def reconstruct(live: Frame, lib: ReferenceLibrary, cfg: Config):
    """Full pipeline for one frame: match, difference, gradients, integrate.

    Returns (DepthMap, matched entry, match cost).  When the match cost
    exceeds max_match_cost the depth map is flagged low-confidence
    rather than rejected: heavy or twisting grasps degrade the match but
    the reconstruction often remains usable.
    """
    entry, cost = match_reference(live, lib, cfg)
    d = difference_image(live, entry.frame)
    g = gradients_from_difference(d, cfg.reconstruct.alpha, cfg.reconstruct.beta)
    depth = poisson_integrate(g, sensing_mask(cfg))
    depth.low_confidence = cost > cfg.reconstruct.max_match_cost
    return depth, entry, cost


def _scaled_u16(values: np.ndarray):
    lo = float(values.min())
    hi = float(values.max())
    if hi > lo:
        scaled = np.rint((values - lo) / (hi - lo) * 65535.0).astype(np.uint16)
    else:
        scaled = np.zeros(values.shape, dtype=np.uint16)
    return scaled, lo, hi


def _write_meta(path, lo: float, hi: float) -> None:
    with open(str(path) + ".meta", "w", encoding="utf-8") as f:
        f.write(f"min {lo!r}\nmax {hi!r}\n")


def export_depth_pgm(depth: DepthMap, path) -> None:
    """16-bit P5 with the min/max scaling recorded in a sidecar header."""
    scaled, lo, hi = _scaled_u16(depth.z)
    netpbm.write_pgm16(path, scaled)
    _write_meta(path, lo, hi)


def export_gradient_pgm(g: GradientField, path_gx, path_gy) -> None:
    for arr, path in ((g.gx, path_gx), (g.gy, path_gy)):
        scaled, lo, hi = _scaled_u16(arr)
        netpbm.write_pgm16(path, scaled)
        _write_meta(path, lo, hi)
