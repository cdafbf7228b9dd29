"""In-plane orientation of the grasped object from the depth map.

Threshold the depth at a fraction of its peak (depth is uncalibrated, so
only relative thresholds make sense), keep the largest connected region,
and take the principal axis of its pixel coordinates.  The angle is
measured from the image y-axis (tip direction, row 0) toward +x,
positive clockwise on screen, in (-90, 90].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import OrientationConfig
from .exceptions import AmbiguousOrientationError, NoContactError
from .reconstruct import DepthMap

__all__ = ["OrientationEstimate", "contact_mask", "estimate_orientation"]

_EIGHT_CONN = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class OrientationEstimate:
    theta_deg: float  # (-90, 90], 0 = aligned with the finger axis
    confidence: float  # principal / secondary eigenvalue ratio
    region_area: int

    def as_record(self, flags=()) -> dict:
        return {
            "theta_deg": self.theta_deg,
            "confidence": self.confidence,
            "area": self.region_area,
            "flags": list(flags),
        }


def contact_mask(depth: DepthMap, tau: float, z_noise_floor: float = 0.0) -> np.ndarray:
    """Pixels above tau x peak depth; empty when the peak is just noise."""
    if not 0 < tau < 1:
        raise ValueError("tau must be in (0, 1)")
    z = np.where(depth.valid_mask, depth.z, 0.0)
    zmax = float(z.max(initial=0.0))
    if zmax <= z_noise_floor:
        return np.zeros(z.shape, dtype=bool)
    return (z > tau * zmax) & depth.valid_mask


def largest_region(mask: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(mask, structure=_EIGHT_CONN)
    if n == 0:
        return np.zeros(mask.shape, dtype=bool)
    areas = np.bincount(labels.ravel())
    areas[0] = 0
    return labels == int(np.argmax(areas))


def principal_angle_deg(region: np.ndarray):
    """Principal-axis angle of a pixel region, plus the eigenvalue ratio."""
    ys, xs = np.nonzero(region)
    cov = np.cov(np.stack([xs, ys]).astype(np.float64))
    vals, vecs = np.linalg.eigh(cov)
    lam2, lam1 = float(vals[0]), float(vals[1])
    vx, vy = vecs[0, 1], vecs[1, 1]
    theta = math.degrees(math.atan2(vx, -vy))
    if theta <= -90.0:
        theta += 180.0
    elif theta > 90.0:
        theta -= 180.0
    confidence = lam1 / max(lam2, 1e-12)
    return theta, confidence


def estimate_orientation(depth: DepthMap, cfg: OrientationConfig) -> OrientationEstimate:
    """PCA orientation of the dominant contact region.

    Raises NoContactError below the area floor and
    AmbiguousOrientationError when the region is too round for its
    principal axis to mean anything.
    """
    mask = contact_mask(depth, cfg.tau, cfg.z_noise_floor)
    region = largest_region(mask)
    area = int(region.sum())
    if area < cfg.min_contact_area:
        raise NoContactError(f"largest contact region {area} px < {cfg.min_contact_area}")
    theta, confidence = principal_angle_deg(region)
    if confidence < cfg.min_elongation:
        raise AmbiguousOrientationError(
            f"elongation {confidence:.2f} < {cfg.min_elongation}: no principal axis"
        )
    return OrientationEstimate(theta_deg=float(theta), confidence=float(confidence), region_area=area)
