"""Black tracking-dot segmentation, matching, and shear measurement.

The elastomer surface carries a grid of dark dots.  Segmenting them from
the luminosity channel against its median-blurred version makes the
detector insensitive to the bend-dependent illumination; matching them
to the bend-consistent reference positions turns their displacements
into an uncalibrated shear signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .config import Config
from .imagecore import Frame, connected_components, median_blur, to_lab_luminosity

__all__ = [
    "MarkerMatch",
    "MarkerField",
    "extract_markers",
    "greedy_match",
    "track_markers",
    "overlay_arrows",
    "render_overlay",
]

_ARROW_RGB = (255, 255, 0)


@dataclass(frozen=True)
class MarkerMatch:
    ref: tuple  # (x, y) reference position
    cur: tuple  # (x, y) current position
    disp: tuple  # cur - ref


@dataclass
class MarkerField:
    """Matched marker displacements plus the aggregate shear magnitude."""

    matches: list = field(default_factory=list)
    unmatched_ref: int = 0
    unmatched_cur: int = 0
    shear_magnitude: float = 0.0

    def as_record(self) -> dict:
        return {
            "matches": [
                {
                    "ref": [m.ref[0], m.ref[1]],
                    "cur": [m.cur[0], m.cur[1]],
                    "disp": [m.disp[0], m.disp[1]],
                }
                for m in self.matches
            ],
            "unmatched_ref": self.unmatched_ref,
            "unmatched_cur": self.unmatched_cur,
            "shear_magnitude": self.shear_magnitude,
        }


def extract_markers(frame: Frame, cfg: Config) -> np.ndarray:
    """Centroids of the dark tracking dots, ordered by (y, x).

    Works on D = median(L) - L where L is the CIE luminosity channel, so
    only blobs darker than their neighborhood survive.  L is quantized
    to 8 bits for the median (0.4 L-unit steps, far below the dot
    contrast) to get the fast histogram path.  A border margin is
    excluded to drop the spurious dark spots at the sensing edges.
    """
    lum = to_lab_luminosity(frame)
    lq = np.clip(np.rint(lum * 2.55), 0, 255).astype(np.uint8)
    med = median_blur(lq, cfg.markers.median_kernel)
    dark = (med.astype(np.int16) - lq.astype(np.int16)) / 2.55
    mask = dark > cfg.markers.t_dark
    margin = cfg.markers.border_margin
    if margin > 0:
        mask[:margin, :] = False
        mask[-margin:, :] = False
        mask[:, :margin] = False
        mask[:, -margin:] = False
    lo, hi = cfg.marker_area_bounds()
    blobs = connected_components(mask, min_area=lo, max_area=hi)
    if not blobs:
        return np.empty((0, 2), dtype=np.float64)
    return np.array([b.centroid for b in blobs], dtype=np.float64)


def greedy_match(cur: np.ndarray, ref: np.ndarray, r_max: float):
    """Greedy one-to-one pairing in ascending distance order.

    Returns (pairs, dists) where pairs is a list of (cur_index,
    ref_index).  Pairs farther apart than r_max are never formed, and no
    point is used twice, so the matching is injective both ways.
    """
    cur = np.asarray(cur, dtype=np.float64).reshape(-1, 2)
    ref = np.asarray(ref, dtype=np.float64).reshape(-1, 2)
    if len(cur) == 0 or len(ref) == 0:
        return [], []
    d = np.linalg.norm(cur[:, None, :] - ref[None, :, :], axis=2)
    order = np.argsort(d, axis=None, kind="stable")
    used_cur = np.zeros(len(cur), dtype=bool)
    used_ref = np.zeros(len(ref), dtype=bool)
    pairs, dists = [], []
    for flat in order:
        i, j = divmod(int(flat), len(ref))
        if d[i, j] > r_max:
            break
        if used_cur[i] or used_ref[j]:
            continue
        used_cur[i] = True
        used_ref[j] = True
        pairs.append((i, j))
        dists.append(float(d[i, j]))
    return pairs, dists


def track_markers(cur, ref, r_max: float) -> MarkerField:
    """Match current markers to reference markers and sum displacements.

    shear_magnitude is the sum (not mean) of displacement norms: the
    total shift of the surface, most sensitive to broad contact.
    """
    cur = np.asarray(cur, dtype=np.float64).reshape(-1, 2)
    ref = np.asarray(ref, dtype=np.float64).reshape(-1, 2)
    pairs, _ = greedy_match(cur, ref, r_max)
    matches = []
    shear = 0.0
    for i, j in pairs:
        disp = cur[i] - ref[j]
        shear += float(np.hypot(disp[0], disp[1]))
        matches.append(
            MarkerMatch(
                ref=(float(ref[j, 0]), float(ref[j, 1])),
                cur=(float(cur[i, 0]), float(cur[i, 1])),
                disp=(float(disp[0]), float(disp[1])),
            )
        )
    return MarkerField(
        matches=matches,
        unmatched_ref=len(ref) - len(pairs),
        unmatched_cur=len(cur) - len(pairs),
        shear_magnitude=shear,
    )


def overlay_arrows(fld: MarkerField, d_sig: float = 1.5):
    """Arrow endpoints (from, to) in image coordinates.

    Arrow length equals |disp| for small displacements and 3 x |disp|
    beyond d_sig, stretched about the reference point, so significant
    shear stands out.
    """
    arrows = []
    for m in fld.matches:
        mag = float(np.hypot(m.disp[0], m.disp[1]))
        scale = 3.0 if mag > d_sig else 1.0
        tip = (m.ref[0] + scale * m.disp[0], m.ref[1] + scale * m.disp[1])
        arrows.append((m.ref, tip))
    return arrows


def render_overlay(frame: Frame, fld: MarkerField, d_sig: float = 1.5) -> Frame:
    """Draw the displacement arrows onto a copy of the frame."""
    img = frame.data.copy()
    for (fx, fy), (tx, ty) in overlay_arrows(fld, d_sig):
        x0, y0 = int(round(fx)), int(round(fy))
        x1, y1 = int(round(tx)), int(round(ty))
        if (x1, y1) == (x0, y0):
            cv2.circle(img, (x0, y0), 1, _ARROW_RGB, -1)
        else:
            cv2.arrowedLine(img, (x0, y0), (x1, y1), _ARROW_RGB, 1, tipLength=0.25)
    return Frame(img)
