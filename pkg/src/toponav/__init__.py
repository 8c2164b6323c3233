"""Topological graph navigation in a deterministic 2D floorplan simulator."""

__version__ = "0.1.0"

from .world import OccupancyGrid, Pose, GeodesicResult  # noqa: F401
