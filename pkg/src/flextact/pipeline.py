"""Per-frame orchestration of the tactile stack against one library.

A pipeline owns a reference library plus a config and exposes the
measurements the placement controller and the service need.  The
library is immutable; the only pipeline state is the sticky
last-matched entry used as a fallback when a frame briefly loses its
proprioceptive dots, so share one pipeline per consumer, not across
threads.
"""

from __future__ import annotations

from . import markers as markers_mod
from .config import Config
from .dotref import ReferenceLibrary, match_reference
from .exceptions import NoProprioceptionError
from .imagecore import Frame
from .orientation import contact_mask, estimate_orientation, largest_region
from .reconstruct import reconstruct

__all__ = ["TactilePipeline"]


class TactilePipeline:
    def __init__(self, library: ReferenceLibrary, cfg: Config = None):
        self.library = library
        self.cfg = cfg if cfg is not None else library.config
        self._last_entry = None

    def reconstruct(self, frame: Frame):
        depth, entry, cost = reconstruct(frame, self.library, self.cfg)
        self._last_entry = entry
        return depth, entry, cost

    def orientation(self, frame: Frame):
        """(estimate, depth map); raises the per-frame estimation errors."""
        depth, entry, cost = self.reconstruct(frame)
        est = estimate_orientation(depth, self.cfg.orientation)
        return est, depth

    def contact_area(self, frame: Frame) -> int:
        """Largest contact-region area in pixels; 0 when nothing is seen."""
        try:
            depth, _, _ = self.reconstruct(frame)
        except NoProprioceptionError:
            return 0
        mask = contact_mask(depth, self.cfg.orientation.tau, self.cfg.orientation.z_noise_floor)
        return int(largest_region(mask).sum())

    def shear(self, frame: Frame):
        """Marker field tracked against the bend-consistent references.

        Falls back to the last matched entry when the current frame has
        no usable dots, so a transient dropout cannot stall descent.
        """
        try:
            entry, _ = self.match(frame)
        except NoProprioceptionError:
            if self._last_entry is None:
                raise
            entry = self._last_entry
        cur = markers_mod.extract_markers(frame, self.cfg)
        fld = markers_mod.track_markers(cur, entry.ref_markers, self.cfg.marker_r_max_px())
        return fld, entry

    def match(self, frame: Frame):
        entry, cost = match_reference(frame, self.library, self.cfg)
        self._last_entry = entry
        return entry, cost
