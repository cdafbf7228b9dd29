"""Tactile perception stack for a compliant vision-based finger.

Core stages: proprioceptive dot reference matching (`dotref`),
difference-image depth reconstruction (`reconstruct`), contact
orientation (`orientation`), marker shear tracking (`markers`), the
set-down controller (`placement`), and the forward sensor simulator
(`simsensor`).  A FastAPI service (`flextact.service`) wraps the stack;
the CLI (`flextact.cli`) is a thin client of that service.
"""

__version__ = "0.1.0"

from .config import Config, load_config
from .imagecore import Frame

__all__ = ["Config", "Frame", "load_config", "__version__"]
