"""Synthetic scenes with a known temporal order.

Three families:

* ``ramp``    frames encode scene time: the base intensity rises strictly
              frame by frame and a bright bar slides left to right.
* ``grammar`` frames are i.i.d. noise; shot-category labels follow a
              genre-conditioned progression, so only (genre, labels) reveal
              the order.
* ``mixed``   ramp frames plus grammar labels, with optional pixel noise and
              label corruption to make the task harder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from ..nn.config import CATEGORIES, DEFAULT_CARDINALITIES, GENRES
from .meta import MetaRecord
from .records import SceneRecord, Shot, derive_seed

FAMILIES = ("ramp", "grammar", "mixed")


@dataclass(frozen=True)
class SynthParams:
    min_shots: int = 3
    max_shots: int = 5
    min_shot_len: int = 8
    max_shot_len: int = 16
    frame_size: int = 32
    channels: int = 1
    num_genres: int = 4
    cardinalities: tuple[int, ...] = DEFAULT_CARDINALITIES
    level_low: int = 40
    level_high: int = 180
    bar_width: int = 4
    bar_amplitude: int = 40
    texture_amplitude: int = 10
    pixel_noise: int = 0
    label_noise: float = 0.0
    start_bias: float = 3.0

    def __post_init__(self):
        if not 2 <= self.min_shots <= self.max_shots:
            raise ContractError("need 2 <= min_shots <= max_shots")
        if self.max_shots > min(self.cardinalities):
            raise ContractError("max_shots cannot exceed the smallest category cardinality")
        if not 1 <= self.min_shot_len <= self.max_shot_len:
            raise ContractError("bad shot length range")
        if not 1 <= self.num_genres <= len(GENRES):
            raise ContractError(f"num_genres must lie in [1, {len(GENRES)}]")
        if self.frame_size % 4:
            raise ContractError("frame_size must be a multiple of 4")
        top = self.level_high + self.bar_amplitude + self.texture_amplitude + self.pixel_noise
        bottom = self.level_low - self.texture_amplitude - self.pixel_noise
        if bottom < 0 or top > 255:
            raise ContractError("intensity budget leaves [0, 255]")
        if self.level_high - self.level_low < self.max_shots * self.max_shot_len:
            raise ContractError("intensity range too small for a strictly increasing ramp")
        if not 0 <= self.label_noise <= 1:
            raise ContractError("label_noise must lie in [0, 1]")

    @property
    def genres(self) -> tuple[str, ...]:
        return GENRES[: self.num_genres]


@dataclass
class SynthScene:
    record: SceneRecord
    frames: np.ndarray  # (F, H, W, C) uint8
    shot_labels: list[list[np.ndarray]]  # per shot, 4 one-hot vectors
    shot_classes: np.ndarray  # (n_shots, 4) ints
    genre: str
    meta: MetaRecord = field(repr=False, default=None)


def _direction(genre_index, category):
    if category == 0:
        return 1
    return 1 if (genre_index + category) % 2 == 0 else -1


def _start_weights(params, genre_index, category, n_shots):
    n_starts = params.cardinalities[category] - n_shots + 1
    w = np.ones(n_starts)
    w[(genre_index + category) % n_starts] += params.start_bias
    return w / w.sum()


def grammar_classes(params: SynthParams, genre_index: int, category: int, n_shots: int, start: int) -> np.ndarray:
    card = params.cardinalities[category]
    v = start + np.arange(n_shots)
    return v if _direction(genre_index, category) > 0 else card - 1 - v


def grammar_class_distribution(params: SynthParams, genre_index: int, category: int) -> np.ndarray:
    """Exact per-shot class frequencies the generator targets for one genre."""
    card = params.cardinalities[category]
    counts = np.zeros(card)
    total = 0.0
    n_choices = params.max_shots - params.min_shots + 1
    for n in range(params.min_shots, params.max_shots + 1):
        w = _start_weights(params, genre_index, category, n)
        for s, ws in enumerate(w):
            for c in grammar_classes(params, genre_index, category, n, s):
                counts[c] += ws / n_choices
        total += n / n_choices
    dist = counts / total
    return (1 - params.label_noise) * dist + params.label_noise / card


def _balanced_noise(rng, shape, amplitude):
    # equal numbers of +a and -a: zero sum in every frame, no rounding
    size = int(np.prod(shape))
    half = np.full(size, amplitude, dtype=np.int32)
    half[size // 2:] = -amplitude
    if size % 2:
        half[-1] = 0
    return rng.permutation(half).reshape(shape)


def _ramp_frames(params, rng, shots, n_frames):
    S, C = params.frame_size, params.channels
    step = (params.level_high - params.level_low) / max(n_frames - 1, 1)
    yy, xx = np.mgrid[0:S, 0:S]
    frames = np.empty((n_frames, S, S, C), dtype=np.int32)
    for si, shot in enumerate(shots):
        cell = 2 if si % 2 == 0 else 4
        phase = si % 2
        checker = ((yy // cell + xx // cell + phase) % 2) * 2 - 1
        texture = params.texture_amplitude * checker
        for f in range(shot.frame_start, shot.frame_end):
            tau = f / max(n_frames - 1, 1)
            base = params.level_low + int(round(f * step))
            x0 = int(round(tau * (S - params.bar_width)))
            img = base + texture
            img[:, x0:x0 + params.bar_width] += params.bar_amplitude
            frames[f] = img[..., None]
    if params.pixel_noise:
        for f in range(n_frames):
            frames[f] += _balanced_noise(rng, frames[f].shape, params.pixel_noise)
    return frames.astype(np.uint8)


def synth_scene(family: str, params: SynthParams = SynthParams(), seed: int = 0, scene_id: str | None = None) -> SynthScene:
    if family not in FAMILIES:
        raise ContractError(f"family must be one of {FAMILIES}, got {family!r}")
    scene_id = scene_id or f"{family}-{seed}"
    rng = np.random.default_rng(derive_seed("synth", family, seed, scene_id))
    n_shots = int(rng.integers(params.min_shots, params.max_shots + 1))
    lengths = rng.integers(params.min_shot_len, params.max_shot_len + 1, size=n_shots)
    ends = np.cumsum(lengths)
    shots = tuple(Shot(int(e - l), int(e)) for e, l in zip(ends, lengths))
    n_frames = int(ends[-1])
    record = SceneRecord(scene_id, shots, "synthetic")

    genre_index = int(rng.integers(params.num_genres))
    genre = params.genres[genre_index]

    classes = np.zeros((n_shots, len(CATEGORIES)), dtype=np.int64)
    for c in range(len(CATEGORIES)):
        w = _start_weights(params, genre_index, c, n_shots)
        start = int(rng.choice(len(w), p=w))
        classes[:, c] = grammar_classes(params, genre_index, c, n_shots, start)
    if family != "ramp" and params.label_noise > 0:
        flip = rng.random(classes.shape) < params.label_noise
        for c, card in enumerate(params.cardinalities):
            classes[flip[:, c], c] = rng.integers(card, size=int(flip[:, c].sum()))

    if family == "grammar":
        shape = (n_frames, params.frame_size, params.frame_size, params.channels)
        frames = rng.integers(0, 256, size=shape, dtype=np.uint8)
    else:
        frames = _ramp_frames(params, rng, shots, n_frames)

    labels = [
        [np.eye(card)[classes[t, c]] for c, card in enumerate(params.cardinalities)]
        for t in range(n_shots)
    ]
    meta = MetaRecord(
        scene_id=scene_id,
        imdb_id=f"tt{derive_seed(scene_id) % 10_000_000:07d}",
        title=f"Synthetic {family} scene {scene_id}",
        description=f"generated {family} scene",
        genres=[genre],
        release_year=1950 + int(rng.integers(70)),
        duration_minutes=90,
    )
    return SynthScene(record, frames, labels, classes, genre, meta)
