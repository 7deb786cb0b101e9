"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: :class:`DataError` (and subclasses) to 2,
:class:`NumericalError` to 3.
"""


class HexReconError(Exception):
    """Base class for all package errors."""


class DataError(HexReconError, ValueError):
    """Malformed or inconsistent input data (files, meshes, scenes)."""


class TopologyError(DataError):
    """Mesh connectivity violates the manifold/closed/oriented contract."""


class EmptyHullError(DataError):
    """Space carving removed every voxel."""


class NoSurfaceError(DataError):
    """Occupancy grid has no inside/outside transition to extract."""


class NumericalError(HexReconError, ArithmeticError):
    """A loss or gradient became non-finite."""
