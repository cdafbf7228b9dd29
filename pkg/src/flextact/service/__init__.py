"""HTTP service wrapping the tactile pipeline."""

from .app import app, create_app

__all__ = ["app", "create_app"]
