from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ContractError, DimensionError

CATEGORIES = ("shot_size", "shot_angle", "shot_motion", "shot_type")

# class names per category; the cardinalities are what the model needs
CATEGORY_CLASSES = {
    "shot_size": ("extreme_wide", "wide", "medium", "close_up", "extreme_close_up"),
    "shot_angle": ("aerial", "high", "eye_level", "low", "dutch"),
    "shot_motion": ("locked", "pan", "tilt", "zoom", "handheld", "push"),
    "shot_type": ("single", "two_shot", "three_shot", "group", "over_the_shoulder",
                  "insert", "no_subject"),
}
DEFAULT_CARDINALITIES = tuple(len(CATEGORY_CLASSES[c]) for c in CATEGORIES)

GENRES = (
    "Action", "Adventure", "Animation", "Biography", "Comedy", "Crime",
    "Documentary", "Drama", "Family", "Fantasy", "Film-Noir", "History",
    "Horror", "Music", "Musical", "Mystery", "Romance", "Sci-Fi", "Sport",
    "Talk-Show", "Thriller", "War", "Western",
)


@dataclass(frozen=True)
class ModelConfig:
    k: int = 3
    segments_per_shot: int = 8
    frame_height: int = 32
    frame_width: int = 32
    channels: int = 1
    patch_size: int = 8
    embed_dim: int = 64
    num_heads: int = 4
    num_layers: int = 2
    mlp_ratio: float = 2.0
    category_cardinalities: tuple[int, ...] = DEFAULT_CARDINALITIES
    num_genres: int = len(GENRES)
    use_cinematology: bool = True
    init_std: float = 0.02
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "category_cardinalities", tuple(int(c) for c in self.category_cardinalities))
        if self.k < 2:
            raise ContractError("k must be >= 2")
        if self.frame_height % self.patch_size or self.frame_width % self.patch_size:
            raise ContractError(
                f"patch size {self.patch_size} must divide the frame size "
                f"{self.frame_height}x{self.frame_width}"
            )
        if self.embed_dim % self.num_heads:
            raise ContractError(f"embed_dim {self.embed_dim} is not divisible by {self.num_heads} heads")
        if len(self.category_cardinalities) != len(CATEGORIES):
            raise ContractError(f"need {len(CATEGORIES)} category cardinalities")
        if min(self.category_cardinalities) < 1 or self.num_genres < 1:
            raise ContractError("cardinalities and num_genres must be >= 1")

    @property
    def num_classes(self) -> int:
        return math.factorial(self.k)

    @property
    def patches_per_frame(self) -> int:
        return (self.frame_height // self.patch_size) * (self.frame_width // self.patch_size)

    @property
    def num_visual_tokens(self) -> int:
        return self.k * self.segments_per_shot * self.patches_per_frame

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["category_cardinalities"] = list(self.category_cardinalities)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class CinematologyInput:
    """Per-shot category probability vectors (in presentation order) plus a genre vector.

    ``categories[c]`` has shape (k, cardinality_c).
    """

    categories: list[np.ndarray]
    genre_vector: np.ndarray
    tol: float = field(default=1e-6, repr=False)

    def __post_init__(self):
        self.categories = [np.asarray(c, dtype=np.float64) for c in self.categories]
        self.genre_vector = np.asarray(self.genre_vector, dtype=np.float64)
        if len(self.categories) != len(CATEGORIES):
            raise DimensionError(f"expected {len(CATEGORIES)} categories, got {len(self.categories)}")
        for name, vecs in zip(CATEGORIES, self.categories):
            if vecs.ndim != 2 or np.any(vecs < 0) or np.any(np.abs(vecs.sum(axis=1) - 1) > self.tol):
                raise ContractError(f"{name} vectors must be probability rows")
        g = self.genre_vector
        if g.ndim != 1 or np.any(g < 0) or abs(g.sum() - 1) > self.tol:
            raise ContractError("genre vector must be nonnegative and sum to 1")

    def check(self, config: ModelConfig):
        for name, vecs, card in zip(CATEGORIES, self.categories, config.category_cardinalities):
            if vecs.shape != (config.k, card):
                raise DimensionError(f"{name}: expected {(config.k, card)}, got {vecs.shape}")
        if self.genre_vector.shape != (config.num_genres,):
            raise DimensionError(f"genre vector has {self.genre_vector.size} entries, expected {config.num_genres}")

    def permuted(self, order) -> CinematologyInput:
        """Reorder the shots; ``order[i]`` is the old index placed at slot i."""
        order = list(order)
        return CinematologyInput([c[order] for c in self.categories], self.genre_vector)
