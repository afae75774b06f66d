"""Possession attribution, ball heatmap, team control distribution, and the
consolidated match summary."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .match_model import FIELD_LENGTH_M, FIELD_WIDTH_M, GroupLabel

CONTROL_RADIUS_M = 3.0
CLAMP_MARGIN_M = 0.5
DEFAULT_COLS = 21
DEFAULT_ROWS = 14


@dataclass
class HeatmapGrid:
    cols: int = DEFAULT_COLS
    rows: int = DEFAULT_ROWS
    field_length: float = FIELD_LENGTH_M
    field_width: float = FIELD_WIDTH_M
    counts: np.ndarray = None
    dropped: int = 0

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.rows, self.cols), dtype=np.int64)

    def cell_of(self, x: float, y: float) -> Optional[tuple[int, int]]:
        """Half-open binning; the exact far edge belongs to the last cell.
        Positions up to 0.5 m outside are clamped, farther ones rejected."""
        if not (
            -CLAMP_MARGIN_M <= x <= self.field_length + CLAMP_MARGIN_M
            and -CLAMP_MARGIN_M <= y <= self.field_width + CLAMP_MARGIN_M
        ):
            return None
        x = min(max(x, 0.0), self.field_length)
        y = min(max(y, 0.0), self.field_width)
        col = min(int(x // (self.field_length / self.cols)), self.cols - 1)
        row = min(int(y // (self.field_width / self.rows)), self.rows - 1)
        return col, row

    def add(self, x: float, y: float) -> Optional[tuple[int, int]]:
        cell = self.cell_of(x, y)
        if cell is None:
            self.dropped += 1
            return None
        col, row = cell
        self.counts[row, col] += 1
        return cell

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        """Row-major CSV, one line per y-row."""
        return "\n".join(",".join(str(int(v)) for v in row) for row in self.counts) + "\n"


def frame_controller(
    ball_pos: Optional[tuple[float, float]],
    players: Sequence[tuple[int, tuple[float, float], GroupLabel]],
    previous: Optional[GroupLabel],
    radius: float = CONTROL_RADIUS_M,
) -> Optional[GroupLabel]:
    """Team of the nearest player within the control radius, else the
    previous controller. Ties break toward the lowest track id. Referees
    never control; goalkeepers count for their team."""
    if ball_pos is None:
        return previous
    bx, by = ball_pos
    best: Optional[tuple[float, int, GroupLabel]] = None
    for track_id, (px, py), label in players:
        team = label.team
        if team is None:
            continue
        d = float(np.hypot(px - bx, py - by))
        if d <= radius and (best is None or (d, track_id) < (best[0], best[1])):
            best = (d, track_id, team)
    return best[2] if best is not None else previous


def possession_rates(controllers: Sequence[Optional[GroupLabel]]) -> dict[str, float]:
    """Fraction of attributed frames per team; unattributed frames are
    excluded from the denominator."""
    a = sum(1 for c in controllers if c is GroupLabel.TEAM_A)
    b = sum(1 for c in controllers if c is GroupLabel.TEAM_B)
    total = a + b
    if total == 0:
        return {}
    return {"TeamA": a / total, "TeamB": b / total}


def ball_heatmap(
    positions: Sequence[tuple[float, float]],
    cols: int = DEFAULT_COLS,
    rows: int = DEFAULT_ROWS,
) -> HeatmapGrid:
    grid = HeatmapGrid(cols=cols, rows=rows)
    for x, y in positions:
        grid.add(x, y)
    return grid


def control_distribution(
    events: Sequence[tuple[Optional[GroupLabel], Optional[tuple[int, int]]]],
    cols: int = DEFAULT_COLS,
    rows: int = DEFAULT_ROWS,
) -> np.ndarray:
    """Per-zone team fractions from (controller, ball cell) pairs.

    Returns a (rows, cols, 2) array of [TeamA, TeamB] fractions; zones with
    no controlled frames are all zero.
    """
    counts = np.zeros((rows, cols, 2), dtype=np.int64)
    for controller, cell in events:
        if controller is None or cell is None:
            continue
        col, row = cell
        if controller is GroupLabel.TEAM_A:
            counts[row, col, 0] += 1
        elif controller is GroupLabel.TEAM_B:
            counts[row, col, 1] += 1
    totals = counts.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(totals > 0, counts / np.maximum(totals, 1), 0.0)
    return frac


@dataclass
class SummaryAccumulator:
    """Streaming accumulators feeding the final match summary."""

    cols: int = DEFAULT_COLS
    rows: int = DEFAULT_ROWS
    heatmap: HeatmapGrid = None
    team_a: int = 0
    team_b: int = 0
    zone_counts: np.ndarray = None
    _controller: Optional[GroupLabel] = None

    def __post_init__(self):
        if self.heatmap is None:
            self.heatmap = HeatmapGrid(cols=self.cols, rows=self.rows)
        if self.zone_counts is None:
            self.zone_counts = np.zeros((self.rows, self.cols, 2), dtype=np.int64)

    def observe(
        self,
        ball_pos: Optional[tuple[float, float]],
        players: Sequence[tuple[int, tuple[float, float], GroupLabel]],
    ) -> Optional[GroupLabel]:
        cell = self.heatmap.add(*ball_pos) if ball_pos is not None else None
        self._controller = frame_controller(ball_pos, players, self._controller)
        c = self._controller
        if c is GroupLabel.TEAM_A:
            self.team_a += 1
        elif c is GroupLabel.TEAM_B:
            self.team_b += 1
        if c is not None and cell is not None:
            col, row = cell
            self.zone_counts[row, col, 0 if c is GroupLabel.TEAM_A else 1] += 1
        return c

    def possession(self) -> dict[str, float]:
        total = self.team_a + self.team_b
        if total == 0:
            return {}
        return {"TeamA": self.team_a / total, "TeamB": self.team_b / total}

    def control_by_zone(self) -> np.ndarray:
        totals = self.zone_counts.sum(axis=2, keepdims=True)
        return np.where(totals > 0, self.zone_counts / np.maximum(totals, 1), 0.0)


def build_summary(
    acc: SummaryAccumulator,
    highlights: Sequence[tuple] = (),
    rosters: Optional[dict] = None,
) -> str:
    """Deterministic JSON serialization of the whole-match summary.

    Every section is present even when empty; possession is the string
    "no data" before any frame is attributed.
    """
    possession = acc.possession() or "no data"
    control = acc.control_by_zone()
    doc = {
        "possession": possession,
        "heatmap": {
            "cols": acc.heatmap.cols,
            "rows": acc.heatmap.rows,
            "counts": acc.heatmap.counts.tolist(),
            "dropped": acc.heatmap.dropped,
        },
        "control_by_zone": {
            "TeamA": np.round(control[:, :, 0], 6).tolist(),
            "TeamB": np.round(control[:, :, 1], 6).tolist(),
        },
        "highlights": [
            {"class": str(getattr(c, "value", c)), "start_frame": s, "end_frame": e}
            for c, s, e in highlights
        ],
        "rosters": rosters or {},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))
