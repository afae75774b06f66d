"""Pipeline configuration: defaults for every stage, plus a plain
`key = value` config-file parser with strict key and range checking."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    fps: int = 25
    confidence_floor: float = 0.3
    # tracker
    n_init: int = 3
    max_age: int = 30
    appearance_gate: float = 0.25
    hard_gate_confidence: float = 0.7
    hard_gate_enabled: bool = True
    ball_noise_scale: float = 4.0
    # team clustering
    cluster_window: int = 3000
    cluster_refresh_frames: int = 5000
    team_count: int = 5
    cluster_seed: int = 0
    # jersey numbers
    number_min_obs: int = 3
    number_confidence_floor: float = 0.5
    # homography
    homography_min_keypoints: int = 6
    homography_min_score: float = 0.5
    homography_max_hold: int = 125
    # summary
    heatmap_cols: int = 21
    heatmap_rows: int = 14
    control_radius_m: float = 3.0

    def validate(self) -> None:
        positive = (
            "fps",
            "n_init",
            "max_age",
            "cluster_window",
            "team_count",
            "number_min_obs",
            "homography_min_keypoints",
            "heatmap_cols",
            "heatmap_rows",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        unit = (
            "confidence_floor",
            "appearance_gate",
            "hard_gate_confidence",
            "number_confidence_floor",
            "homography_min_score",
        )
        for name in unit:
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.control_radius_m <= 0 or self.ball_noise_scale <= 0:
            raise ConfigError("control_radius_m and ball_noise_scale must be positive")


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    ftype = _FIELD_TYPES[name]
    if ftype in ("bool", bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: cannot parse boolean from {raw!r}")
    if ftype in ("int", int):
        return int(raw)
    return float(raw)


def parse_config_file(text: str, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Parse `key = value` lines; '#' starts a comment; unknown keys reject."""
    cfg = base or PipelineConfig()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key = value")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        try:
            setattr(cfg, key, _coerce(key, raw.strip()))
        except ValueError as e:
            raise ConfigError(f"line {line_no}: {e}") from None
    cfg.validate()
    return cfg


def apply_overrides(cfg: PipelineConfig, overrides: dict[str, str]) -> PipelineConfig:
    for key, raw in overrides.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    cfg.validate()
    return cfg
