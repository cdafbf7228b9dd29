"""Tunable parameters for every pipeline stage, grouped per stage.

Defaults are tuned against the simulated sensor palette; real captures
will need retuned HSV windows, morphology radii, and photometric gains.
Config files are a single JSON object mirroring this model; unknown keys
are rejected so typos fail loudly, and command-line flags may override
individual dotted keys.
"""

from __future__ import annotations

import json
import math
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

__all__ = [
    "GeometryConfig",
    "DotConfig",
    "ReconstructConfig",
    "OrientationConfig",
    "MarkerConfig",
    "PlacementConfig",
    "Config",
    "load_config",
    "with_overrides",
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryConfig(_Section):
    """Physical layout of the sensing surface as seen by the camera."""

    width: int = Field(320, ge=32)
    height: int = Field(240, ge=32)
    px_per_mm: float = Field(10.0, gt=0)
    marker_pitch_mm: float = Field(4.0, gt=0)
    marker_diameter_mm: float = Field(1.0, gt=0)
    # Proprioceptive dot bands sit in the top (tip side) and bottom
    # (base side) image margins; None derives rows from the height.
    dot_band_rows: Optional[Tuple[float, float]] = None
    dot_margin_x: float = Field(20.0, ge=0)
    dot_pitch_px: float = Field(25.0, gt=0)
    dots_per_band: int = Field(12, ge=1)
    dot_radius_px: float = Field(3.0, gt=0)
    border_margin_px: int = Field(8, ge=0)
    # Crop of the tactile sensing region used for reconstruction.
    sensing_left: int = Field(8, ge=0)
    sensing_right: int = Field(8, ge=0)
    sensing_top: int = Field(64, ge=0)
    sensing_bottom: int = Field(24, ge=0)
    # Bend model: displacement of the tip row at full flex, and the
    # fraction of that field the gel-surface markers inherit.
    max_bend_px: float = Field(20.0, ge=0)
    marker_bend_factor: float = Field(0.35, ge=0, le=1)

    @model_validator(mode="after")
    def _check_regions(self):
        x0, y0, x1, y1 = self.sensing_region()
        if x1 - x0 < 16 or y1 - y0 < 16:
            raise ValueError("sensing region is too small")
        top, bottom = self.dot_rows()
        if not (0 <= top < self.height / 2 <= bottom < self.height):
            raise ValueError("dot bands must straddle the image mid-row")
        return self

    def dot_rows(self) -> Tuple[float, float]:
        if self.dot_band_rows is not None:
            return self.dot_band_rows
        return (12.0, float(self.height) - 12.0)

    def sensing_region(self) -> Tuple[int, int, int, int]:
        """(x0, y0, x1, y1) half-open crop of the sensing surface."""
        return (
            self.sensing_left,
            self.sensing_top,
            self.width - self.sensing_right,
            self.height - self.sensing_bottom,
        )

    def marker_pitch_px(self) -> float:
        return self.marker_pitch_mm * self.px_per_mm

    def marker_radius_px(self) -> float:
        return 0.5 * self.marker_diameter_mm * self.px_per_mm


class DotConfig(_Section):
    """Segmentation of the yellow proprioceptive dots and reference matching."""

    hue_lo: float = 40.0
    hue_hi: float = 80.0
    sat_min: float = Field(0.45, ge=0, le=1)
    val_min: float = Field(0.40, ge=0, le=1)
    morph_radius: int = Field(1, ge=1)
    area_min: int = Field(6, ge=1)
    area_max: int = Field(400, ge=1)
    min_dot_separation: float = Field(6.0, gt=0)
    min_dots: int = Field(4, ge=1)
    n_columns: int = Field(32, ge=1)
    dedup_epsilon: float = Field(1.0, gt=0)
    miss_penalty: float = Field(20.0, gt=0)


class ReconstructConfig(_Section):
    """Photometric inverse gains and reference-match quality gate."""

    alpha: float = Field(0.01, gt=0)
    beta: float = Field(0.02, gt=0)
    max_match_cost: float = Field(8.0, gt=0)


class OrientationConfig(_Section):
    tau: float = Field(0.3, gt=0, lt=1)
    min_contact_area: int = Field(200, ge=1)
    min_elongation: float = Field(2.0, ge=1)
    z_noise_floor: float = Field(0.8, ge=0)


class MarkerConfig(_Section):
    """Black tracking-dot segmentation and displacement matching."""

    median_kernel: int = 25
    t_dark: float = Field(12.0, gt=0)
    area_factor_lo: float = Field(0.25, gt=0)
    area_factor_hi: float = Field(4.0, gt=0)
    r_max_factor: float = Field(0.45, gt=0)
    d_sig: float = Field(1.5, gt=0)
    border_margin: int = Field(8, ge=0)

    @field_validator("median_kernel")
    @classmethod
    def _odd_kernel(cls, v):
        if v < 3 or v % 2 == 0:
            raise ValueError("median_kernel must be odd and >= 3")
        return v


class PlacementConfig(_Section):
    n_estimate_frames: int = Field(5, ge=1)
    shear_threshold: float = Field(15.0, gt=0)
    descend_step_mm: float = Field(2.0, gt=0)
    max_descend_steps: int = Field(50, ge=1)
    max_handoff_frames: int = Field(20, ge=1)


class Config(_Section):
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    dots: DotConfig = Field(default_factory=DotConfig)
    reconstruct: ReconstructConfig = Field(default_factory=ReconstructConfig)
    orientation: OrientationConfig = Field(default_factory=OrientationConfig)
    markers: MarkerConfig = Field(default_factory=MarkerConfig)
    placement: PlacementConfig = Field(default_factory=PlacementConfig)

    def marker_r_max_px(self) -> float:
        """Match radius for marker tracking, a fraction of the pitch."""
        return self.markers.r_max_factor * self.geometry.marker_pitch_px()

    def marker_area_bounds(self) -> Tuple[int, int]:
        """Blob area window derived from the physical marker size."""
        nominal = math.pi * self.geometry.marker_radius_px() ** 2
        lo = max(4, int(round(self.markers.area_factor_lo * nominal)))
        hi = int(round(self.markers.area_factor_hi * nominal))
        return lo, hi


def load_config(path) -> Config:
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    return Config.model_validate(raw)


def with_overrides(cfg: Config, overrides: dict) -> Config:
    """Apply dotted-key overrides (e.g. {"markers.t_dark": 10}) and revalidate."""
    data = cfg.model_dump()
    for key, value in overrides.items():
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise KeyError(f"unknown config section {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise KeyError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return Config.model_validate(data)
