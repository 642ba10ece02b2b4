"""Turn sequence samples into model-ready tensors."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import DataFormatError
from ..nn.config import CATEGORIES, GENRES, CinematologyInput, ModelConfig
from ..nn.model import collate_cinematology
from .meta import LabelProvision, MetaRecord, genre_vector
from .records import derive_seed
from .sequences import SequenceSample, shuffle_augment
from .tsn import tsn_sample


@dataclass
class SceneData:
    frames: np.ndarray  # (F, H, W, C) uint8
    shot_index: dict  # frame_start -> shot index within the scene
    labels: list | None = None  # per shot: 4 probability vectors
    genre: np.ndarray | None = None


class SceneBank:
    """Pixels, shot labels and genre vectors keyed by scene_id."""

    def __init__(self):
        self.scenes: dict[str, SceneData] = {}

    def __contains__(self, scene_id):
        return scene_id in self.scenes

    def add(self, scene_id, frames, shots, labels=None, genre=None):
        self.scenes[scene_id] = SceneData(
            frames, {s.frame_start: i for i, s in enumerate(shots)}, labels, genre
        )

    @classmethod
    def from_synth(cls, scenes, vocab=GENRES) -> SceneBank:
        bank = cls()
        for sc in scenes:
            bank.add(sc.record.scene_id, sc.frames, sc.record.shots, sc.shot_labels,
                     genre_vector([sc.genre], vocab))
        return bank

    @classmethod
    def from_manifest(cls, samples, root, labels: LabelProvision | None = None,
                      meta: dict[str, MetaRecord] | None = None, frames_dir=None,
                      vocab=GENRES, primary_genre_only=False, shot_index=None) -> SceneBank:
        """Frames come from each shot's ``path`` (relative to ``root``) or ``frames_dir/<scene_id>.npy``.

        ``shot_index`` maps scene_id -> {frame_start: shot index in the label file}.
        Without it the shots a scene uses in ``samples`` are numbered in temporal order.
        """
        root = Path(root)
        bank = cls()
        by_scene: dict[str, set] = {}
        paths: dict[str, Path] = {}
        for s in samples:
            starts = by_scene.setdefault(s.scene_id, set())
            for shot in s.shots:
                starts.add(shot.frame_start)
                if shot.path:
                    paths[s.scene_id] = root / shot.path
        for sid, starts in by_scene.items():
            path = paths.get(sid)
            if path is None and frames_dir is not None:
                path = Path(frames_dir) / f"{sid}.npy"
            if path is None or not path.exists():
                raise DataFormatError(f"no frame data for scene {sid}")
            frames = np.load(path, mmap_mode="r")
            if frames.ndim == 3:
                frames = frames[..., None]
            ordered = sorted(starts)
            if shot_index is not None and sid in shot_index:
                mapping = {int(k): int(v) for k, v in shot_index[sid].items()}
                missing = [st for st in ordered if st not in mapping]
                if missing:
                    raise DataFormatError(f"{sid}: no shot index for frame_start {missing[0]}")
                label_idx = [mapping[st] for st in ordered]
            else:
                label_idx = list(range(len(ordered)))
            scene_labels = None
            if labels is not None:
                scene_labels = [labels.get(sid, i) for i in label_idx]
            genre = None
            if meta is not None:
                if sid not in meta:
                    raise DataFormatError(f"no metadata for scene {sid}")
                genre = genre_vector(meta[sid].genres, vocab, primary_genre_only)
            bank.scenes[sid] = SceneData(frames, {st: i for i, st in enumerate(ordered)}, scene_labels, genre)
        return bank


def sample_rng(seed, epoch, sample: SequenceSample, index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, "sample", epoch, sample.scene_id, index))


def build_batch(samples, bank: SceneBank, config: ModelConfig, mode: str = "test", seed: int = 0,
                epoch: int = 0, indices=None, augment: bool = False, dtype=torch.float32):
    """Returns (frames, cine or None, labels, samples actually used).

    Every random choice for sample ``indices[i]`` uses a generator derived from
    (seed, epoch, scene_id, index), so batches do not depend on assembly order.
    """
    if indices is None:
        indices = range(len(samples))
    S = config.segments_per_shot
    clips, cines, labels, used = [], [], [], []
    for s, idx in zip(samples, indices):
        rng = sample_rng(seed, epoch, s, idx)
        if augment and s.split == "train":
            s = shuffle_augment(s, rng)
        data = bank.scenes[s.scene_id]
        shot_frames = []
        for shot in s.presented_shots:
            offs = tsn_sample(shot.length, S, mode, rng) + shot.frame_start
            shot_frames.append(np.asarray(data.frames[offs]))
        clips.append(np.stack(shot_frames))
        if config.use_cinematology:
            if data.labels is None or data.genre is None:
                raise DataFormatError(f"{s.scene_id}: cinematology needs shot labels and a genre")
            per_shot = [data.labels[data.shot_index[shot.frame_start]] for shot in s.presented_shots]
            cats = [np.stack([v[c] for v in per_shot]) for c in range(len(CATEGORIES))]
            cines.append(CinematologyInput(cats, data.genre))
        labels.append(s.label)
        used.append(s)
    frames = torch.from_numpy(np.stack(clips).astype(np.float32) / 255.0).to(dtype)
    cine = collate_cinematology(cines, config, dtype) if config.use_cinematology else None
    return frames, cine, np.array(labels, dtype=np.int64), used
