"""Reorient-and-set-down task loop driven purely by tactile feedback.

The controller is handed a thin object (a wine-glass stem), estimates
its in-grasp angle from a burst of tactile frames, counter-rotates the
tool so the glass hangs upright, then descends until the marker shear
magnitude reports table contact and only then releases.  When the
estimate fails (slip, weak imprint) it degrades to a contact-stop
descent without rotation instead of crashing: the set-down safety net
survives every estimation failure.
"""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass, field
from typing import Annotated, List, Literal, Optional, Protocol, Union

from pydantic import BaseModel, ConfigDict, Field

from .config import Config
from .dotref import ReferenceLibrary
from .exceptions import (
    AmbiguousOrientationError,
    EstimationFailedError,
    NoContactError,
    NoProprioceptionError,
    PortError,
    TableNotFoundError,
)
from .imagecore import Frame
from .pipeline import TactilePipeline
from .simsensor import Scene, Shear, StemIndenter, render

__all__ = [
    "PlacementState",
    "RobotPort",
    "Scenario",
    "SimulatedRobotPort",
    "TrialReport",
    "estimate_grasp_angle",
    "descend_until_contact",
    "run_placement",
]


class PlacementState(str, enum.Enum):
    WAIT_HANDOFF = "WaitHandoff"
    GRASPED = "Grasped"
    ESTIMATING = "Estimating"
    REORIENTING = "Reorienting"
    DESCENDING = "Descending"
    DEGRADED_DESCEND = "DegradedDescend"
    RELEASED = "Released"
    DONE = "Done"


class RobotPort(Protocol):
    """Abstract robot: synchronous commands plus a tactile frame source."""

    def capture(self) -> Frame: ...

    def rotate_tool(self, dtheta_deg: float) -> None: ...

    def descend(self, step_mm: float) -> None: ...

    def open_gripper(self) -> None: ...


class SlipFault(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["slip"] = "slip"
    after_frame: int = Field(1, ge=0)  # depth signal collapses from this capture on


class PortFailureFault(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["port_failure"] = "port_failure"
    after_commands: int = Field(ge=0)


Fault = Annotated[Union[SlipFault, PortFailureFault], Field(discriminator="kind")]


class Scenario(BaseModel):
    """Scripted world for a simulated placement trial."""

    model_config = ConfigDict(extra="forbid")

    handoff_angle_deg: float = Field(0.0, gt=-90.0, le=90.0)
    stem_width_mm: float = Field(7.0, gt=0)
    stem_depth_mm: float = Field(0.5, ge=0)
    bend: float = Field(0.35, ge=0, le=1)
    table_distance_mm: Optional[float] = Field(13.0, ge=0)  # None = no table
    shear_gain_px_per_mm: float = Field(1.0, gt=0)
    noise_sigma: float = Field(2.0, ge=0)
    faults: List[Fault] = Field(default_factory=list)
    success_angle_tol_deg: float = Field(3.0, gt=0)
    gentle_max_compression_mm: float = Field(4.0, gt=0)
    crash_compression_mm: float = Field(8.0, gt=0)


class SimulatedRobotPort:
    """RobotPort backed by the forward sensor model.

    The grasp is rigid: rotating the tool reorients the glass in the
    world but leaves the stem angle in the tactile image unchanged.
    Table contact injects a marker shear along the world-vertical force
    direction expressed in the gripper frame, growing with compression.
    """

    def __init__(self, scenario: Scenario, cfg: Config, seed: int = 0):
        self.scenario = scenario
        self.cfg = cfg
        self.seed = seed
        self.gripper_rotation_deg = 0.0
        self.descent_mm = 0.0
        self.max_compression_mm = 0.0
        self.release_compression_mm: Optional[float] = None
        self.released = False
        self.n_frames = 0
        self.n_commands = 0

    # -- frame source ------------------------------------------------

    def capture(self) -> Frame:
        idx = self.n_frames
        self.n_frames += 1
        s = self.scenario
        depth = s.stem_depth_mm
        for f in s.faults:
            if f.kind == "slip" and idx >= f.after_frame:
                depth = 0.0
        shear = None
        compression = self._compression()
        if compression > 0.0:
            ang = math.radians(self.gripper_rotation_deg)
            mag = compression * s.shear_gain_px_per_mm
            shear = Shear(dx_px=-math.sin(ang) * mag, dy_px=-math.cos(ang) * mag)
        scene = Scene(
            bend=s.bend,
            indenter=StemIndenter(width_mm=s.stem_width_mm, angle_deg=s.handoff_angle_deg, depth_mm=depth),
            shear=shear,
            noise_sigma=s.noise_sigma,
            seed=self.seed * 1000003 + idx,
        )
        frame, _ = render(scene, self.cfg.geometry, self.cfg.reconstruct.alpha, self.cfg.reconstruct.beta)
        return frame

    # -- commands ----------------------------------------------------

    def _command(self):
        self.n_commands += 1
        for f in self.scenario.faults:
            if f.kind == "port_failure" and self.n_commands > f.after_commands:
                raise PortError(f"simulated port failure at command {self.n_commands}")

    def rotate_tool(self, dtheta_deg: float) -> None:
        self._command()
        self.gripper_rotation_deg += dtheta_deg

    def descend(self, step_mm: float) -> None:
        self._command()
        if self.released:
            raise PortError("descend after release")
        self.descent_mm += step_mm
        self.max_compression_mm = max(self.max_compression_mm, self._compression())

    def open_gripper(self) -> None:
        self._command()
        self.released = True
        self.release_compression_mm = self._compression()

    def _compression(self) -> float:
        if self.scenario.table_distance_mm is None:
            return 0.0
        return max(0.0, self.descent_mm - self.scenario.table_distance_mm)

    # -- simulation-only truth ----------------------------------------

    def ground_truth(self) -> dict:
        residual = self.scenario.handoff_angle_deg + self.gripper_rotation_deg
        return {
            "residual_angle_deg": residual,
            "released": self.released,
            "release_compression_mm": self.release_compression_mm,
            "max_compression_mm": self.max_compression_mm,
            "crashed": self.max_compression_mm > self.scenario.crash_compression_mm,
        }


@dataclass
class TrialReport:
    final_state: str = PlacementState.WAIT_HANDOFF.value
    states: list = field(default_factory=list)  # [(state, detail), ...]
    estimated_angle_deg: Optional[float] = None
    commanded_rotation_deg: Optional[float] = None
    descend_steps: int = 0
    shear_trace: list = field(default_factory=list)
    released: bool = False
    degraded: bool = False
    aborted: bool = False
    abort_reason: Optional[str] = None
    residual_angle_deg: Optional[float] = None
    port_truth: Optional[dict] = None

    def _enter(self, state: PlacementState, detail=None):
        self.states.append({"state": state.value, "detail": detail})
        self.final_state = state.value

    def as_dict(self) -> dict:
        return {
            "final_state": self.final_state,
            "states": self.states,
            "estimated_angle_deg": self.estimated_angle_deg,
            "commanded_rotation_deg": self.commanded_rotation_deg,
            "descend_steps": self.descend_steps,
            "shear_trace": self.shear_trace,
            "released": self.released,
            "degraded": self.degraded,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "residual_angle_deg": self.residual_angle_deg,
            "port_truth": self.port_truth,
        }


def estimate_grasp_angle(frames, lib: ReferenceLibrary, cfg: Config, pipeline: TactilePipeline = None) -> float:
    """Median orientation over a burst of frames.

    Frames that fail (no contact, round region, lost dots, or a
    low-confidence reference match) are skipped; the median of the
    survivors is robust to one bad frame.  Raises EstimationFailedError
    only when every frame failed.
    """
    pipe = pipeline if pipeline is not None else TactilePipeline(lib, cfg)
    angles = []
    for frame in frames:
        try:
            est, depth = pipe.orientation(frame)
        except (NoContactError, AmbiguousOrientationError, NoProprioceptionError):
            continue
        if depth.low_confidence:
            continue
        angles.append(est.theta_deg)
    if not angles:
        raise EstimationFailedError("no frame yielded a usable orientation")
    return float(statistics.median(angles))


def descend_until_contact(
    port: RobotPort,
    lib: ReferenceLibrary,
    cfg: Config,
    pipeline: TactilePipeline = None,
    trace_out: list = None,
) -> int:
    """Step downward until the shear magnitude reports table contact.

    After each step the marker field is measured against the matched
    bend references; the loop stops the first time shear_magnitude
    exceeds the threshold and never issues another descend afterwards.
    Raises TableNotFoundError at the step limit (the caller must not
    release).
    """
    pipe = pipeline if pipeline is not None else TactilePipeline(lib, cfg)
    pcfg = cfg.placement
    trace = trace_out if trace_out is not None else []
    for step in range(1, pcfg.max_descend_steps + 1):
        port.descend(pcfg.descend_step_mm)
        frame = port.capture()
        fld, _ = pipe.shear(frame)
        trace.append(float(fld.shear_magnitude))
        if fld.shear_magnitude > pcfg.shear_threshold:
            return step
    raise TableNotFoundError(
        f"no shear trip within {pcfg.max_descend_steps} steps", steps=pcfg.max_descend_steps, shear_trace=trace
    )


def run_placement(port: RobotPort, lib: ReferenceLibrary, cfg: Config, pipeline: TactilePipeline = None) -> TrialReport:
    """Run the full handoff -> estimate -> reorient -> set-down loop.

    The gripper opens only after the shear threshold has tripped; on
    estimation failure the trial continues on the DegradedDescend path
    (no rotation, contact-stop descent preserved); on table-not-found it
    aborts without releasing.
    """
    pipe = pipeline if pipeline is not None else TactilePipeline(lib, cfg)
    report = TrialReport()
    report._enter(PlacementState.WAIT_HANDOFF)
    try:
        area = 0
        grasped = False
        for _ in range(cfg.placement.max_handoff_frames):
            frame = port.capture()
            area = pipe.contact_area(frame)
            if area >= cfg.orientation.min_contact_area:
                grasped = True
                break
        if not grasped:
            report.aborted = True
            report.abort_reason = "handoff-timeout"
            return _finish(report, port)
        report._enter(PlacementState.GRASPED, {"contact_area": area})

        frames = [port.capture() for _ in range(cfg.placement.n_estimate_frames)]
        report._enter(PlacementState.ESTIMATING, {"frames": len(frames)})
        try:
            theta = estimate_grasp_angle(frames, lib, cfg, pipeline=pipe)
            report.estimated_angle_deg = theta
        except EstimationFailedError:
            report.degraded = True

        if not report.degraded:
            command = -report.estimated_angle_deg
            report._enter(PlacementState.REORIENTING, {"dtheta_deg": command})
            port.rotate_tool(command)
            report.commanded_rotation_deg = command
            descend_state = PlacementState.DESCENDING
        else:
            descend_state = PlacementState.DEGRADED_DESCEND
        report._enter(descend_state)

        try:
            steps = descend_until_contact(port, lib, cfg, pipeline=pipe, trace_out=report.shear_trace)
            report.descend_steps = steps
        except TableNotFoundError as exc:
            report.descend_steps = exc.steps
            report.aborted = True
            report.abort_reason = "table-not-found"
            return _finish(report, port)

        port.open_gripper()
        report.released = True
        report._enter(PlacementState.RELEASED, {"steps": report.descend_steps})
        report._enter(PlacementState.DONE)
    except PortError as exc:
        report.aborted = True
        report.abort_reason = f"port-failure: {exc}"
    return _finish(report, port)


def _finish(report: TrialReport, port) -> TrialReport:
    truth = getattr(port, "ground_truth", None)
    if callable(truth):
        report.port_truth = truth()
        report.residual_angle_deg = report.port_truth.get("residual_angle_deg")
    return report


def trial_success(report: TrialReport, scenario: Scenario) -> bool:
    """Nominal success: upright within tolerance after a gentle set-down."""
    if report.final_state != PlacementState.DONE.value or report.degraded or report.aborted:
        return False
    truth = report.port_truth or {}
    if truth.get("crashed"):
        return False
    residual = report.residual_angle_deg
    if residual is not None and abs(residual) > scenario.success_angle_tol_deg:
        return False
    compression = truth.get("release_compression_mm")
    if compression is not None and compression > scenario.gentle_max_compression_mm:
        return False
    return True
