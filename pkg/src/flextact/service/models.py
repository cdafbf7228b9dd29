"""Request/response schemas for the service, plus array codecs.

Images travel as base64 of their on-disk formats (P6 frames, 16-bit P5
depth maps) so service output and CLI artifacts are byte-identical;
dense ground-truth arrays travel as base64 float32.
"""

from __future__ import annotations

import base64
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..config import Config
from ..placement import Scenario
from ..simsensor import Scene

__all__ = [
    "b64_bytes",
    "bytes_from_b64",
    "b64_f32",
    "f32_from_b64",
    "b64_bits",
    "bits_from_b64",
    "HealthResponse",
    "RenderRequest",
    "GroundTruthModel",
    "RenderedFrame",
    "RenderResponse",
    "BuildLibraryRequest",
    "BuildLibraryResponse",
    "OpenLibraryRequest",
    "OpenLibraryResponse",
    "LibraryInfo",
    "LibrariesResponse",
    "ProcessRequest",
    "MatchModel",
    "DepthModel",
    "OrientationModel",
    "ProcessResponse",
    "PlaceRequest",
    "PlaceSummary",
    "PlaceResponse",
]

OutputKind = Literal["depth", "orientation", "markers", "overlay"]


def b64_bytes(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def bytes_from_b64(s: str) -> bytes:
    return base64.b64decode(s.encode("ascii"), validate=True)


def b64_f32(arr: np.ndarray) -> str:
    return b64_bytes(np.ascontiguousarray(arr, dtype=np.float32).tobytes())


def f32_from_b64(s: str, shape) -> np.ndarray:
    return np.frombuffer(bytes_from_b64(s), dtype=np.float32).reshape(shape).copy()


def b64_bits(mask: np.ndarray) -> str:
    return b64_bytes(np.packbits(mask.astype(np.uint8)).tobytes())


def bits_from_b64(s: str, shape) -> np.ndarray:
    flat = np.unpackbits(np.frombuffer(bytes_from_b64(s), dtype=np.uint8))
    return flat[: shape[0] * shape[1]].reshape(shape).astype(bool)


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HealthResponse(_Model):
    status: str
    version: str


class RenderRequest(_Model):
    scenes: List[Scene]
    config: Optional[Config] = None


class GroundTruthModel(_Model):
    width: int
    height: int
    bend: float
    theta_true_deg: Optional[float]
    contact_area_px: int
    depth_max_px: float
    dot_centers: List[List[float]]
    marker_centers: List[List[float]]
    depth_f32_b64: str
    gx_f32_b64: str
    gy_f32_b64: str
    contact_mask_bits_b64: str


class RenderedFrame(_Model):
    index: int
    ppm_b64: str
    ground_truth: GroundTruthModel


class RenderResponse(_Model):
    frames: List[RenderedFrame]


class BuildLibraryRequest(_Model):
    frames_ppm_b64: List[str]
    config: Optional[Config] = None


class BuildLibraryResponse(_Model):
    library_id: str
    n_entries: int
    n_deduped: int
    rejected: List[dict]
    manifest: dict
    entry_frames_ppm_b64: List[str]


class OpenLibraryRequest(_Model):
    manifest: dict
    frames_ppm_b64: Dict[str, str]


class OpenLibraryResponse(_Model):
    library_id: str
    n_entries: int


class LibraryInfo(_Model):
    library_id: str
    n_entries: int
    width: int
    height: int


class LibrariesResponse(_Model):
    libraries: List[LibraryInfo]


class ProcessRequest(_Model):
    library_id: str
    frame_ppm_b64: str
    outputs: List[OutputKind] = Field(default_factory=lambda: ["depth", "orientation", "markers"])
    config: Optional[Config] = None


class MatchModel(_Model):
    bend_id: int
    cost: float
    low_confidence: bool


class DepthModel(_Model):
    pgm16_b64: str
    z_min: float
    z_max: float


class OrientationModel(_Model):
    theta_deg: Optional[float]
    confidence: Optional[float]
    area: int
    flags: List[str]


class ProcessResponse(_Model):
    error: Optional[str] = None
    match: Optional[MatchModel] = None
    depth: Optional[DepthModel] = None
    orientation: Optional[OrientationModel] = None
    markers: Optional[dict] = None
    overlay_ppm_b64: Optional[str] = None


class PlaceRequest(_Model):
    library_id: str
    scenario: Scenario
    trials: int = Field(1, ge=1)
    seed: int = 0
    config: Optional[Config] = None


class PlaceSummary(_Model):
    trials: int
    successes: int
    degraded: int
    aborted: int
    crashes: int


class PlaceResponse(_Model):
    reports: List[dict]
    summary: PlaceSummary
