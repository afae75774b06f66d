"""Clip-level highlight classification: average pooling over 8 per-second
feature rows, a from-scratch softmax head, and interval extraction."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

CLIP_ROWS = 8
DEFAULT_FEATURE_DIM = 512
MODEL_MAGIC = b"SMX1"


class HighlightClass(str, Enum):
    SHOOTING = "shooting"
    CORNER_KICK = "corner_kick"
    PENALTY = "penalty"
    FREE_KICK = "free_kick"
    INJURY = "injury"
    SUBSTITUTION = "substitution"
    NORMAL_PLAY = "normal_play"


CLASS_ORDER = list(HighlightClass)
N_CLASSES = len(CLASS_ORDER)


class BadClipShape(ValueError):
    pass


class DegenerateDataset(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ClipSample:
    start_frame: int
    features: np.ndarray  # 8 x D
    label: Optional[HighlightClass] = None

    def __post_init__(self):
        f = self.features
        if f.ndim != 2 or f.shape[0] != CLIP_ROWS:
            raise BadClipShape(f"expected {CLIP_ROWS} rows, got shape {f.shape}")
        if not np.isfinite(f).all():
            raise BadClipShape("non-finite clip features")


def pool_clip(clip: ClipSample) -> np.ndarray:
    """Column-wise mean of the 8 per-second rows."""
    return clip.features.mean(axis=0)


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    seed: int = 0
    l2: float = 1e-4


@dataclass
class SoftmaxModel:
    weights: np.ndarray  # n_classes x D
    bias: np.ndarray  # n_classes
    train_config: Optional[TrainConfig] = None


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_gradients(
    W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy + L2 on weights, with analytic gradients."""
    n = X.shape[0]
    P = _softmax(X @ W.T + b)
    loss = float(-np.log(P[np.arange(n), y] + 1e-300).mean() + 0.5 * l2 * (W**2).sum())
    G = P.copy()
    G[np.arange(n), y] -= 1.0
    G /= n
    return loss, G.T @ X + l2 * W, G.sum(axis=0)


def train_clip_classifier(
    clips: Sequence[ClipSample], config: Optional[TrainConfig] = None
) -> SoftmaxModel:
    """Full-batch gradient descent on pooled clip vectors; deterministic
    given the config seed."""
    config = config or TrainConfig()
    labeled = [c for c in clips if c.label is not None]
    if len({c.label for c in labeled}) < 2:
        raise DegenerateDataset("need at least two classes to train")
    X = np.array([pool_clip(c) for c in labeled])
    y = np.array([CLASS_ORDER.index(c.label) for c in labeled])
    rng = np.random.default_rng(config.seed)
    D = X.shape[1]
    W = rng.normal(scale=0.01, size=(N_CLASSES, D))
    b = np.zeros(N_CLASSES)
    for _ in range(config.epochs):
        _, gW, gb = loss_and_gradients(W, b, X, y, config.l2)
        W -= config.learning_rate * gW
        b -= config.learning_rate * gb
    return SoftmaxModel(W, b, config)


def classify_clip(model: SoftmaxModel, clip: ClipSample) -> tuple[HighlightClass, np.ndarray]:
    """Argmax class (ties go to declaration order) and the 7 probabilities."""
    x = pool_clip(clip)
    if x.shape[0] != model.weights.shape[1]:
        raise DimensionMismatch(f"{x.shape[0]} vs {model.weights.shape[1]}")
    probs = _softmax(model.weights @ x + model.bias)
    return CLASS_ORDER[int(np.argmax(probs))], probs


def save_model(model: SoftmaxModel, path: str) -> None:
    """Flat binary: magic 'SMX1', uint32 n_classes, uint32 D, then row-major
    float64 weights followed by the bias."""
    n, d = model.weights.shape
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(model.weights.astype("<f8").tobytes())
        fh.write(model.bias.astype("<f8").tobytes())


def load_model(path: str) -> SoftmaxModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise ValueError(f"bad model magic {magic!r}")
        n, d = struct.unpack("<II", fh.read(8))
        W = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d).copy()
        b = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
    return SoftmaxModel(W, b)


def extract_highlight_intervals(
    classified: Sequence[tuple[HighlightClass, int, int]],
) -> list[tuple[HighlightClass, int, int]]:
    """Merge temporally adjacent or overlapping clips of the same class into
    maximal intervals; normal play is dropped. Input: (class, start, end)
    frame-inclusive, in temporal order."""
    by_class: dict[HighlightClass, list[list]] = {}
    for cls, start, end in classified:
        if cls is HighlightClass.NORMAL_PLAY:
            continue
        runs = by_class.setdefault(cls, [])
        if runs and start <= runs[-1][1] + 1:
            runs[-1][1] = max(runs[-1][1], end)
        else:
            runs.append([start, end])
    merged = [(cls, s, e) for cls, runs in by_class.items() for s, e in runs]
    return sorted(merged, key=lambda t: (t[1], t[0].value))
