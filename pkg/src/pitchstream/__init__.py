"""Streaming soccer match analytics: identity-stable tracking, team and
jersey identification, field registration, highlights, and match summaries
over per-frame detector output streams."""

from .config import PipelineConfig
from .match_model import (
    BoundingBox,
    Detection,
    FrameRecord,
    GroupLabel,
    ObjectClass,
    parse_observation_stream,
    standard_field_model,
    validate_frame,
)
from .pipeline import MatchPipeline
from .simulate import SimConfig, score_tracks, simulate_match
from .tracking import Tracker, TrackerConfig

__all__ = [
    "BoundingBox",
    "Detection",
    "FrameRecord",
    "GroupLabel",
    "MatchPipeline",
    "ObjectClass",
    "PipelineConfig",
    "SimConfig",
    "Tracker",
    "TrackerConfig",
    "parse_observation_stream",
    "score_tracks",
    "simulate_match",
    "standard_field_model",
    "validate_frame",
]
