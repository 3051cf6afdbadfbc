"""Artifact producers for the cirfuse retrieval engine: embedding
extraction, caption generation, and benchmark annotation conversion."""

__version__ = "0.1.0"

from .formats import AdapterError

__all__ = ["AdapterError", "__version__"]
