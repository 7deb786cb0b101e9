"""Multi-view surface reconstruction with an explicit hexagonal mesh and a neural shader."""

__version__ = "0.1.0"
