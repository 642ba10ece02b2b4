"""Scene / shot records, shot-boundary files and shot cleaning."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ContractError, DataFormatError, UnusableScene

SOURCES = ("ingested", "synthetic")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any mix of ints and strings."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little") >> 1


@dataclass(frozen=True)
class Shot:
    frame_start: int
    frame_end: int  # exclusive
    path: str | None = None

    def __post_init__(self):
        if self.frame_end <= self.frame_start or self.frame_start < 0:
            raise ContractError(f"invalid frame range [{self.frame_start}, {self.frame_end})")

    @property
    def length(self) -> int:
        return self.frame_end - self.frame_start

    def to_dict(self) -> dict:
        d = {"start": self.frame_start, "end": self.frame_end}
        if self.path is not None:
            d["path"] = self.path
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Shot:
        return cls(int(d["start"]), int(d["end"]), d.get("path"))


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    shots: tuple[Shot, ...]
    source: str = "ingested"

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple(self.shots))
        if not self.scene_id:
            raise ContractError("scene_id must be non-empty")
        if self.source not in SOURCES:
            raise ContractError(f"source must be one of {SOURCES}")
        for a, b in zip(self.shots, self.shots[1:]):
            if b.frame_start < a.frame_end:
                raise ContractError(f"shots [{a.frame_start},{a.frame_end}) and [{b.frame_start},{b.frame_end}) overlap")

    @property
    def num_frames(self) -> int:
        return self.shots[-1].frame_end if self.shots else 0


def parse_shot_boundaries(text: str, video_id: str, path=None) -> SceneRecord:
    shots = []
    prev_end = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataFormatError(f"expected 'start end', got {line!r}", path, lineno)
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataFormatError(f"non-integer frame index in {line!r}", path, lineno) from None
        if start < 0 or end <= start:
            raise DataFormatError(f"empty or negative range {start} {end}", path, lineno)
        if start < prev_end:
            raise DataFormatError(f"range {start} {end} overlaps or precedes the previous shot", path, lineno)
        shots.append(Shot(start, end))
        prev_end = end
    if not shots:
        raise DataFormatError("no shots in boundary file", path)
    return SceneRecord(video_id, tuple(shots), "ingested")


def ingest_shot_boundaries(path, video_id: str | None = None) -> SceneRecord:
    path = Path(path)
    return parse_shot_boundaries(path.read_text(), video_id or path.stem, path)


def format_shot_boundaries(scene: SceneRecord) -> str:
    return "".join(f"{s.frame_start} {s.frame_end}\n" for s in scene.shots)


def write_shot_boundaries(scene: SceneRecord, path):
    Path(path).write_text(format_shot_boundaries(scene))


def clean_shots(
    scene: SceneRecord,
    min_frames: int = 8,
    max_black_fraction: float = 0.5,
    frames: np.ndarray | None = None,
    black_level: float = 16.0,
    k: int = 3,
) -> SceneRecord:
    """Drop too-short shots and, given pixels, shots that are mostly black.

    ``frames`` holds the whole scene, indexed by absolute frame number.
    Raises UnusableScene when fewer than ``k`` shots survive.
    """
    kept = []
    for shot in scene.shots:
        if shot.length < min_frames:
            continue
        if frames is not None:
            clip = frames[shot.frame_start:shot.frame_end]
            luma = clip.reshape(len(clip), -1).mean(axis=1)
            if np.mean(luma < black_level) > max_black_fraction:
                continue
        kept.append(shot)
    if len(kept) < k:
        raise UnusableScene(f"{scene.scene_id}: {len(kept)} usable shots, need {k}")
    if len(kept) == len(scene.shots):
        return scene
    return replace(scene, shots=tuple(kept))
