"""Command-line surface for dynbinval."""

from __future__ import annotations

from .app import main  # noqa: F401

__all__ = ["main"]
