"""Segment-based frame sampling (one frame per uniform segment)."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError


def segment_bounds(length: int, segments: int) -> list[tuple[int, int]]:
    return [(i * length // segments, (i + 1) * length // segments) for i in range(segments)]


def tsn_sample(length: int, segments: int, mode: str = "test", rng: np.random.Generator | None = None) -> np.ndarray:
    """Frame offsets (relative to the shot start), one per segment.

    train: uniform within each segment; test: floor((lo + hi) / 2) with an
    exclusive ``hi``.  Shots shorter than ``segments`` repeat their last frame.
    """
    if length < 1:
        raise ContractError("cannot sample an empty shot")
    if segments < 1:
        raise ContractError("segments must be >= 1")
    if mode not in ("train", "test"):
        raise ContractError(f"mode must be 'train' or 'test', got {mode!r}")
    if length < segments:
        return np.minimum(np.arange(segments), length - 1)
    bounds = segment_bounds(length, segments)
    if mode == "test":
        return np.array([(lo + hi) // 2 for lo, hi in bounds])
    if rng is None:
        raise ContractError("train-mode sampling needs an rng")
    return np.array([rng.integers(lo, hi) for lo, hi in bounds])
