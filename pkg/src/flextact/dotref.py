"""Proprioceptive reference library: build, persist, and match.

The finger's bend state is observed through yellow fluorescent dots
painted along the backbone.  A no-contact sweep over bend states becomes
a library of reference entries; each live frame is matched to the entry
whose dot constellation it most resembles, which isolates tactile change
from proprioceptive change.

Library construction is sequential; a built ReferenceLibrary is treated
as immutable and can be shared across threads for concurrent matching.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import markers as markers_mod
from .config import Config
from .exceptions import LibraryFormatError, NoProprioceptionError
from .imagecore import Frame, connected_components, morph_close, morph_open, threshold_hsv, to_hsv

__all__ = [
    "DotSet",
    "ReferencePointMatrix",
    "ReferenceEntry",
    "ReferenceLibrary",
    "extract_dots",
    "to_point_matrix",
    "build_library",
    "match_reference",
    "entry_cost",
    "save_library",
    "load_library",
    "manifest_dict",
]

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class DotSet:
    """Sub-pixel centroids of the proprioceptive dots in one frame."""

    centers: np.ndarray  # (n, 2) float, columns (x, y)
    frame_id: str
    width: int
    height: int


@dataclass
class ReferencePointMatrix:
    """Per-column dot positions, one slot per column bin per side band.

    Rows above the image mid-line belong to the tip-side band, rows
    below to the base-side band; each band keeps at most one dot per
    column bin (NaN marks an empty slot).
    """

    top: np.ndarray  # (n_columns, 2) float, NaN where empty
    bottom: np.ndarray
    n_columns: int
    collisions: int = 0

    def band_points(self, band: str) -> np.ndarray:
        return self.top if band == "top" else self.bottom


@dataclass
class ReferenceEntry:
    bend_id: int
    frame: Frame
    dots: np.ndarray  # (n, 2) raw dot centers
    matrix: ReferencePointMatrix
    ref_markers: np.ndarray  # (m, 2) black-marker centroids for this bend


@dataclass
class ReferenceLibrary:
    entries: list
    config: Config
    metadata: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.entries[0].frame.width

    @property
    def height(self) -> int:
        return self.entries[0].frame.height


def extract_dots(frame: Frame, cfg: Config, frame_id: str = "") -> DotSet:
    """Segment the yellow dots: HSV window, open, close, centroids.

    Centers closer together than min_dot_separation are merged down to
    the largest-area blob so one smeared dot cannot count twice.
    """
    dc = cfg.dots
    hsv = to_hsv(frame)
    mask = threshold_hsv(hsv, (dc.hue_lo, dc.sat_min, dc.val_min), (dc.hue_hi, 1.0, 1.0))
    mask = morph_open(mask, dc.morph_radius)
    mask = morph_close(mask, dc.morph_radius)
    blobs = connected_components(mask, min_area=dc.area_min, max_area=dc.area_max)
    kept = []
    for blob in sorted(blobs, key=lambda b: (-b.area, b.centroid[1], b.centroid[0])):
        c = np.array(blob.centroid)
        if all(np.linalg.norm(c - k) >= dc.min_dot_separation for k in kept):
            kept.append(c)
    if kept:
        centers = np.array(sorted(kept, key=lambda p: (p[1], p[0])), dtype=np.float64)
    else:
        centers = np.empty((0, 2), dtype=np.float64)
    return DotSet(centers=centers, frame_id=frame_id, width=frame.width, height=frame.height)


def to_point_matrix(dots: DotSet, n_columns: int) -> ReferencePointMatrix:
    """Bin dots into columns, one slot per side band.

    A collision inside a bin keeps the dot nearer the band's typical row
    (the median y of that band) and counts a warning.
    """
    if n_columns < 1:
        raise ValueError("n_columns must be >= 1")
    top = np.full((n_columns, 2), np.nan)
    bottom = np.full((n_columns, 2), np.nan)
    mid = dots.height / 2.0
    collisions = 0

    bands = {"top": [], "bottom": []}
    for x, y in dots.centers:
        bands["top" if y < mid else "bottom"].append((x, y))
    for name, pts in bands.items():
        if not pts:
            continue
        expected_row = float(np.median([p[1] for p in pts]))
        target = top if name == "top" else bottom
        for x, y in pts:
            col = min(n_columns - 1, max(0, int(x * n_columns / dots.width)))
            if np.isnan(target[col, 0]):
                target[col] = (x, y)
            else:
                collisions += 1
                if abs(y - expected_row) < abs(target[col, 1] - expected_row):
                    target[col] = (x, y)
    return ReferencePointMatrix(top=top, bottom=bottom, n_columns=n_columns, collisions=collisions)


def _mean_displacement(a: np.ndarray, b: np.ndarray, r_max: float) -> float:
    """Mean matched-dot displacement; infinite when the sets disagree."""
    if len(a) != len(b):
        return float("inf")
    if len(a) == 0:
        return 0.0
    pairs, dists = markers_mod.greedy_match(a, b, r_max)
    if len(pairs) != len(a):
        return float("inf")
    return float(np.mean(dists))


def build_library(frames, cfg: Config, frame_ids=None) -> ReferenceLibrary:
    """Build a reference library from a no-contact bend sweep.

    Frames whose dot set moved less than dedup_epsilon (mean px) since
    the previous retained entry are dropped as duplicates; frames with
    fewer than min_dots dots are rejected with a diagnostic.
    """
    entries = []
    rejected = []
    deduped = 0
    prev_dots = None
    for idx, frame in enumerate(frames):
        fid = frame_ids[idx] if frame_ids else f"frame-{idx:04d}"
        dots = extract_dots(frame, cfg, frame_id=fid)
        if len(dots.centers) < cfg.dots.min_dots:
            rejected.append({"index": idx, "frame_id": fid, "reason": f"only {len(dots.centers)} dots (min {cfg.dots.min_dots})"})
            log.info("rejecting %s: %s", fid, rejected[-1]["reason"])
            continue
        if prev_dots is not None:
            moved = _mean_displacement(dots.centers, prev_dots, r_max=cfg.geometry.marker_pitch_px())
            if moved <= cfg.dots.dedup_epsilon:
                deduped += 1
                continue
        entry = ReferenceEntry(
            bend_id=len(entries),
            frame=frame,
            dots=dots.centers,
            matrix=to_point_matrix(dots, cfg.dots.n_columns),
            ref_markers=markers_mod.extract_markers(frame, cfg),
        )
        entries.append(entry)
        prev_dots = dots.centers
    if not entries:
        raise LibraryFormatError("no usable frames: every input was rejected or empty")
    metadata = {"n_input": len(entries) + deduped + len(rejected), "n_deduped": deduped, "rejected": rejected}
    return ReferenceLibrary(entries=entries, config=cfg, metadata=metadata)


def entry_cost(dots: DotSet, matrix: ReferencePointMatrix, miss_penalty: float) -> float:
    """Mean distance from live dots to the entry's matrix points.

    Each live dot looks at its own column bin +-1 within its side band;
    a dot with no candidate there (or nothing nearer than the penalty)
    contributes miss_penalty, which keeps the cost bounded.
    """
    mid = dots.height / 2.0
    n = matrix.n_columns
    total = 0.0
    for x, y in dots.centers:
        band = matrix.top if y < mid else matrix.bottom
        col = min(n - 1, max(0, int(x * n / dots.width)))
        best = miss_penalty
        for c in range(max(0, col - 1), min(n, col + 2)):
            px, py = band[c]
            if np.isnan(px):
                continue
            best = min(best, float(np.hypot(px - x, py - y)))
        total += best
    return total / len(dots.centers)


def match_reference(frame: Frame, lib: ReferenceLibrary, cfg: Config):
    """Find the library entry whose dot constellation matches the frame.

    Returns (entry, cost).  Ties break toward the lowest bend_id.
    """
    dots = extract_dots(frame, cfg)
    if len(dots.centers) == 0:
        raise NoProprioceptionError("no proprioceptive dots visible in frame")
    costs = [entry_cost(dots, e.matrix, cfg.dots.miss_penalty) for e in lib.entries]
    best = int(np.argmin(costs))
    return lib.entries[best], float(costs[best])


def _points_json(arr: np.ndarray):
    return [[float(x), float(y)] for x, y in np.asarray(arr).reshape(-1, 2)]


def _matrix_json(band: np.ndarray):
    out = []
    for x, y in band:
        out.append(None if np.isnan(x) else [float(x), float(y)])
    return out


def manifest_dict(lib: ReferenceLibrary) -> dict:
    entries = []
    for e in lib.entries:
        entries.append(
            {
                "bend_id": e.bend_id,
                "frame_file": f"entry_{e.bend_id:04d}.ppm",
                "dots": _points_json(e.dots),
                "matrix": {
                    "n_columns": e.matrix.n_columns,
                    "top": _matrix_json(e.matrix.top),
                    "bottom": _matrix_json(e.matrix.bottom),
                    "collisions": e.matrix.collisions,
                },
                "ref_markers": _points_json(e.ref_markers),
            }
        )
    return {
        "format_version": FORMAT_VERSION,
        "width": lib.width,
        "height": lib.height,
        "config": lib.config.model_dump(),
        "entries": entries,
        "metadata": lib.metadata,
    }


def save_library(lib: ReferenceLibrary, dirpath) -> None:
    """Persist as a directory: manifest.json plus one P6 frame per entry."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    manifest = manifest_dict(lib)
    for e in lib.entries:
        e.frame.to_ppm(d / f"entry_{e.bend_id:04d}.ppm")
    with open(d / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _matrix_from_json(m: dict) -> ReferencePointMatrix:
    def band(rows):
        arr = np.full((m["n_columns"], 2), np.nan)
        for i, p in enumerate(rows):
            if p is not None:
                arr[i] = p
        return arr

    return ReferencePointMatrix(
        top=band(m["top"]),
        bottom=band(m["bottom"]),
        n_columns=m["n_columns"],
        collisions=m.get("collisions", 0),
    )


def library_from_manifest(manifest: dict, frame_lookup) -> ReferenceLibrary:
    """Reconstruct a library from a manifest and a frame_file -> Frame mapping."""
    if manifest.get("format_version") != FORMAT_VERSION:
        raise LibraryFormatError(f"unsupported library format_version {manifest.get('format_version')!r}")
    try:
        cfg = Config.model_validate(manifest["config"])
        entries = []
        for em in manifest["entries"]:
            frame = frame_lookup(em["frame_file"])
            if frame.width != manifest["width"] or frame.height != manifest["height"]:
                raise LibraryFormatError(f"frame {em['frame_file']} dimensions do not match manifest")
            entries.append(
                ReferenceEntry(
                    bend_id=em["bend_id"],
                    frame=frame,
                    dots=np.array(em["dots"], dtype=np.float64).reshape(-1, 2),
                    matrix=_matrix_from_json(em["matrix"]),
                    ref_markers=np.array(em["ref_markers"], dtype=np.float64).reshape(-1, 2),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, LibraryFormatError):
            raise
        raise LibraryFormatError(f"corrupt library manifest: {exc}") from exc
    if not entries:
        raise LibraryFormatError("library has no entries")
    return ReferenceLibrary(entries=entries, config=cfg, metadata=manifest.get("metadata", {}))


def load_library(dirpath) -> ReferenceLibrary:
    d = Path(dirpath)
    manifest_path = d / "manifest.json"
    if not manifest_path.is_file():
        raise LibraryFormatError(f"no manifest.json in {d}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    return library_from_manifest(manifest, lambda name: Frame.from_ppm(d / name))
