"""FastAPI engine service wrapping the pipeline for long-running use."""

from .app import create_app

__all__ = ["create_app"]
