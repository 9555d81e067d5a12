"""FastAPI service for the workbench (``uvicorn neurols.service:app``)."""

from .app import app, create_app

__all__ = ["app", "create_app"]
