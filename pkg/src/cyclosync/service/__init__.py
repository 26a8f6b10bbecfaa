"""HTTP service wrapping the scenario runners."""

from .app import app, create_app

__all__ = ["app", "create_app"]
