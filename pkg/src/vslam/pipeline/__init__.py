"""Tracking, local mapping and loop closing, orchestrated by :class:`System`."""

from .loop import LoopCloser, LoopReport
from .mapping import LocalMapper, MappingReport, bundle_adjust
from .search import IndexedFrame, epipolar_mask, project_to_frame, search_by_projection
from .system import ModeError, System, TimestampError, create_system
from .tracking import Frame, Tracker
from .types import FrameResult, Mode, PipelineParams, TrackingState

__all__ = [
    "Frame",
    "FrameResult",
    "IndexedFrame",
    "LocalMapper",
    "LoopCloser",
    "LoopReport",
    "MappingReport",
    "Mode",
    "ModeError",
    "PipelineParams",
    "System",
    "TimestampError",
    "Tracker",
    "TrackingState",
    "bundle_adjust",
    "create_system",
    "epipolar_mask",
    "project_to_frame",
    "search_by_projection",
]
