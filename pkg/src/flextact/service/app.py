"""FastAPI application exposing the tactile stack.

Reference libraries are built or opened once and held in memory under a
content-derived id; frame processing, rendering, and placement trials
are then stateless requests against them.  All heavy lifting lives in
the core package; endpoints only translate between wire models and
arrays.
"""

from __future__ import annotations

import hashlib
import io
import json
import threading

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, netpbm
from ..config import Config
from ..dotref import build_library, library_from_manifest, manifest_dict
from ..exceptions import (
    AmbiguousOrientationError,
    FlextactError,
    LibraryFormatError,
    NoContactError,
    NoProprioceptionError,
)
from ..imagecore import Frame
from ..markers import extract_markers, render_overlay, track_markers
from ..orientation import estimate_orientation
from ..pipeline import TactilePipeline
from ..placement import SimulatedRobotPort, run_placement, trial_success
from ..simsensor import render
from . import models as m

__all__ = ["create_app", "app"]


def _decode_frame(ppm_b64: str) -> Frame:
    try:
        return Frame(netpbm.read_ppm(io.BytesIO(m.bytes_from_b64(ppm_b64))))
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"bad PPM payload: {exc}") from exc


def _library_id(manifest: dict) -> str:
    canonical = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return "lib-" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _ground_truth_model(truth) -> m.GroundTruthModel:
    h, w = truth.depth.shape
    return m.GroundTruthModel(
        width=w,
        height=h,
        bend=truth.bend,
        theta_true_deg=truth.theta_true_deg,
        contact_area_px=int(truth.contact_mask.sum()),
        depth_max_px=float(truth.depth.max(initial=0.0)),
        dot_centers=[[float(x), float(y)] for x, y in truth.dot_centers],
        marker_centers=[[float(x), float(y)] for x, y in truth.marker_centers],
        depth_f32_b64=m.b64_f32(truth.depth),
        gx_f32_b64=m.b64_f32(truth.gx),
        gy_f32_b64=m.b64_f32(truth.gy),
        contact_mask_bits_b64=m.b64_bits(truth.contact_mask),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="flextact", version=__version__)
    app.state.libraries = {}
    app.state.lock = threading.Lock()

    def _get_library(library_id: str):
        lib = app.state.libraries.get(library_id)
        if lib is None:
            raise HTTPException(status_code=404, detail=f"unknown library {library_id!r}")
        return lib

    def _register(lib) -> str:
        library_id = _library_id(manifest_dict(lib))
        with app.state.lock:
            app.state.libraries[library_id] = lib
        return library_id

    @app.get("/health", response_model=m.HealthResponse)
    def health():
        return m.HealthResponse(status="ok", version=__version__)

    @app.get("/libraries", response_model=m.LibrariesResponse)
    def libraries():
        infos = [
            m.LibraryInfo(library_id=k, n_entries=len(v.entries), width=v.width, height=v.height)
            for k, v in sorted(app.state.libraries.items())
        ]
        return m.LibrariesResponse(libraries=infos)

    @app.post("/render", response_model=m.RenderResponse)
    def render_scenes(req: m.RenderRequest):
        cfg = req.config or Config()
        frames = []
        for i, scene in enumerate(req.scenes):
            try:
                frame, truth = render(scene, cfg.geometry, cfg.reconstruct.alpha, cfg.reconstruct.beta)
            except FlextactError as exc:
                raise HTTPException(status_code=422, detail=f"scene {i}: {exc}") from exc
            frames.append(
                m.RenderedFrame(
                    index=i,
                    ppm_b64=m.b64_bytes(frame.ppm_bytes()),
                    ground_truth=_ground_truth_model(truth),
                )
            )
        return m.RenderResponse(frames=frames)

    @app.post("/library/build", response_model=m.BuildLibraryResponse)
    def library_build(req: m.BuildLibraryRequest):
        cfg = req.config or Config()
        frames = [_decode_frame(s) for s in req.frames_ppm_b64]
        try:
            lib = build_library(frames, cfg)
        except LibraryFormatError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        library_id = _register(lib)
        return m.BuildLibraryResponse(
            library_id=library_id,
            n_entries=len(lib.entries),
            n_deduped=lib.metadata.get("n_deduped", 0),
            rejected=lib.metadata.get("rejected", []),
            manifest=manifest_dict(lib),
            entry_frames_ppm_b64=[m.b64_bytes(e.frame.ppm_bytes()) for e in lib.entries],
        )

    @app.post("/library/open", response_model=m.OpenLibraryResponse)
    def library_open(req: m.OpenLibraryRequest):
        decoded = {name: _decode_frame(b64) for name, b64 in req.frames_ppm_b64.items()}

        def lookup(name):
            if name not in decoded:
                raise LibraryFormatError(f"missing frame file {name!r}")
            return decoded[name]

        try:
            lib = library_from_manifest(req.manifest, lookup)
        except LibraryFormatError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        library_id = _register(lib)
        return m.OpenLibraryResponse(library_id=library_id, n_entries=len(lib.entries))

    @app.post("/process", response_model=m.ProcessResponse)
    def process(req: m.ProcessRequest):
        lib = _get_library(req.library_id)
        cfg = req.config or lib.config
        frame = _decode_frame(req.frame_ppm_b64)
        pipe = TactilePipeline(lib, cfg)
        try:
            depth, entry, cost = pipe.reconstruct(frame)
        except NoProprioceptionError:
            return m.ProcessResponse(error="no-proprioception")

        resp = m.ProcessResponse(
            match=m.MatchModel(bend_id=entry.bend_id, cost=cost, low_confidence=depth.low_confidence)
        )
        if "depth" in req.outputs:
            lo = float(depth.z.min())
            hi = float(depth.z.max())
            if hi > lo:
                scaled = np.rint((depth.z - lo) / (hi - lo) * 65535.0).astype(np.uint16)
            else:
                scaled = np.zeros(depth.z.shape, dtype=np.uint16)
            resp.depth = m.DepthModel(pgm16_b64=m.b64_bytes(netpbm.pgm16_bytes(scaled)), z_min=lo, z_max=hi)
        if "orientation" in req.outputs:
            flags = ["low-confidence-match"] if depth.low_confidence else []
            try:
                est = estimate_orientation(depth, cfg.orientation)
                resp.orientation = m.OrientationModel(
                    theta_deg=est.theta_deg, confidence=est.confidence, area=est.region_area, flags=flags
                )
            except NoContactError:
                resp.orientation = m.OrientationModel(theta_deg=None, confidence=None, area=0, flags=flags + ["no-contact"])
            except AmbiguousOrientationError:
                resp.orientation = m.OrientationModel(
                    theta_deg=None, confidence=None, area=0, flags=flags + ["ambiguous-orientation"]
                )
        if "markers" in req.outputs or "overlay" in req.outputs:
            cur = extract_markers(frame, cfg)
            fld = track_markers(cur, entry.ref_markers, cfg.marker_r_max_px())
            if "markers" in req.outputs:
                resp.markers = fld.as_record()
            if "overlay" in req.outputs:
                overlay = render_overlay(frame, fld, cfg.markers.d_sig)
                resp.overlay_ppm_b64 = m.b64_bytes(overlay.ppm_bytes())
        return resp

    @app.post("/place", response_model=m.PlaceResponse)
    def place(req: m.PlaceRequest):
        lib = _get_library(req.library_id)
        cfg = req.config or lib.config
        reports = []
        successes = degraded = aborted = crashes = 0
        for trial in range(req.trials):
            seed = req.seed + trial
            port = SimulatedRobotPort(req.scenario, cfg, seed=seed)
            report = run_placement(port, lib, cfg)
            ok = trial_success(report, req.scenario)
            successes += ok
            degraded += report.degraded
            aborted += report.aborted
            crashes += bool((report.port_truth or {}).get("crashed"))
            reports.append({"trial": trial, "seed": seed, "success": ok, **report.as_dict()})
        return m.PlaceResponse(
            reports=reports,
            summary=m.PlaceSummary(
                trials=req.trials, successes=successes, degraded=degraded, aborted=aborted, crashes=crashes
            ),
        )

    return app


app = create_app()
