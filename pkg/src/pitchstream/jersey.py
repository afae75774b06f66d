"""Confidence-weighted aggregation of per-detection jersey-number reads
into a stable per-track number."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

DEFAULT_MIN_OBSERVATIONS = 3
DEFAULT_CONFIDENCE_FLOOR = 0.5


class ValueOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class NumberEstimate:
    value: Optional[int]  # None when unknown
    confidence: float
    observation_count: int


@dataclass
class NumberVote:
    weights: dict[int, float] = field(default_factory=dict)
    observation_count: int = 0

    def add(self, value: int, confidence: float) -> None:
        if not (0 <= value <= 99):
            raise ValueOutOfRange(f"jersey number {value} outside [0, 99]")
        if not (0.0 <= confidence <= 1.0):
            raise ValueOutOfRange(f"confidence {confidence} outside [0, 1]")
        self.weights[value] = self.weights.get(value, 0.0) + confidence
        self.observation_count += 1

    def reset(self) -> None:
        """Drop accumulated votes (used after a group-label flip repair)."""
        self.weights.clear()
        self.observation_count = 0

    def infer(
        self,
        min_obs: int = DEFAULT_MIN_OBSERVATIONS,
        confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
    ) -> NumberEstimate:
        total = sum(self.weights.values())
        if self.observation_count < min_obs or total <= 0.0:
            return NumberEstimate(None, 0.0, self.observation_count)
        # argmax by weight, ties broken toward the lower number
        best = min(self.weights, key=lambda v: (-self.weights[v], v))
        confidence = self.weights[best] / total
        if confidence < confidence_floor:
            return NumberEstimate(None, 0.0, self.observation_count)
        return NumberEstimate(best, confidence, self.observation_count)


def add_number_observation(vote: NumberVote, value: int, confidence: float) -> NumberVote:
    vote.add(value, confidence)
    return vote


def infer_track_number(
    vote: NumberVote,
    min_obs: int = DEFAULT_MIN_OBSERVATIONS,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> NumberEstimate:
    return vote.infer(min_obs, confidence_floor)
