"""Shuffled k-shot sequences, scene-level splits and manifest files."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ContractError, DataFormatError
from ..permlab import Permutation, apply_shuffle, rank, unrank
from .records import SceneRecord, Shot, derive_seed

SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SequenceSample:
    """``shots`` are in temporal order; the model sees ``presented_shots``.

    ``presentation_order`` is the shuffle ``p`` with presented[i] = shots[p[i]],
    and ``label`` is its lexicographic rank.
    """

    scene_id: str
    shots: tuple[Shot, ...]
    presentation_order: tuple[int, ...]
    label: int
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple(self.shots))
        object.__setattr__(self, "presentation_order", tuple(int(v) for v in self.presentation_order))
        if self.split not in SPLITS:
            raise ContractError(f"split must be one of {SPLITS}, got {self.split!r}")
        perm = Permutation(self.presentation_order)
        if perm.k != len(self.shots):
            raise ContractError("presentation order and shot count disagree")
        if rank(perm).class_index != self.label:
            raise ContractError(f"label {self.label} does not match order {self.presentation_order}")

    @property
    def k(self) -> int:
        return len(self.shots)

    @property
    def permutation(self) -> Permutation:
        return Permutation(self.presentation_order)

    @property
    def presented_shots(self) -> list[Shot]:
        return apply_shuffle(self.shots, self.permutation)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scene_id": self.scene_id,
            "split": self.split,
            "shots": [s.to_dict() for s in self.shots],
            "presentation_order": list(self.presentation_order),
            "label": self.label,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SequenceSample:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise DataFormatError(f"unsupported schema_version {d.get('schema_version')!r}")
        s = cls(
            d["scene_id"],
            tuple(Shot.from_dict(x) for x in d["shots"]),
            tuple(d["presentation_order"]),
            int(d["label"]),
            d["split"],
        )
        if s.k != d["k"]:
            raise DataFormatError(f"k={d['k']} but {s.k} shots listed")
        return s


def shuffled_sample(scene_id, shots, rng, split="train") -> SequenceSample:
    order = tuple(int(v) for v in rng.permutation(len(shots)))
    return SequenceSample(scene_id, tuple(shots), order, rank(Permutation(order)).class_index, split)


def make_sequences(scene: SceneRecord, k: int = 3, count: int | None = None, seed: int = 0,
                   split: str = "train") -> list[SequenceSample]:
    """Windows of k consecutive shots (stride 1), each with a fresh uniform shuffle.

    ``count=None`` takes every window once; larger counts cycle the windows.
    """
    n_windows = len(scene.shots) - k + 1
    if n_windows < 1:
        raise ContractError(f"{scene.scene_id}: {len(scene.shots)} shots, need at least {k}")
    if count is None:
        count = n_windows
    out = []
    for i in range(count):
        w = i % n_windows
        rng = np.random.default_rng(derive_seed(seed, scene.scene_id, i))
        out.append(shuffled_sample(scene.scene_id, scene.shots[w:w + k], rng, split))
    return out


def shuffle_augment(sample: SequenceSample, rng: np.random.Generator) -> SequenceSample:
    if sample.split != "train":
        raise ContractError(f"shuffle augmentation is for training samples only, got {sample.split!r}")
    return shuffled_sample(sample.scene_id, sample.shots, rng, sample.split)


def split_scenes(scene_ids, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> dict[str, str]:
    """Scene-level split assignment by largest remainder; every split gets at least one scene."""
    ids = sorted(set(scene_ids))
    ratios = np.asarray(ratios, dtype=np.float64)
    if len(ratios) != len(SPLITS) or np.any(ratios <= 0) or abs(ratios.sum() - 1) > 1e-6:
        raise ContractError(f"ratios must be {len(SPLITS)} positive numbers summing to 1")
    if len(ids) < len(SPLITS):
        raise ContractError(f"{len(ids)} scenes cannot fill {len(SPLITS)} splits")
    target = ratios * len(ids)
    counts = np.floor(target).astype(int)
    remainder = len(ids) - counts.sum()
    for i in np.argsort(-(target - counts), kind="stable")[:remainder]:
        counts[i] += 1
    # no split left empty: borrow from the largest
    for i in np.flatnonzero(counts == 0):
        counts[np.argmax(counts)] -= 1
        counts[i] = 1
    order = np.random.default_rng(derive_seed(seed, "split")).permutation(len(ids))
    assignment = {}
    start = 0
    for name, c in zip(SPLITS, counts):
        for j in order[start:start + c]:
            assignment[ids[j]] = name
        start += c
    return assignment


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_manifest(samples, path, header: dict | None = None):
    lines = []
    head = {"kind": "header", "schema_version": SCHEMA_VERSION}
    head.update(header or {})
    lines.append(_dumps(head))
    lines += [_dumps(s.to_dict()) for s in samples]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> tuple[dict, list[SequenceSample]]:
    path = Path(path)
    header = {}
    samples = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"invalid JSON: {e.msg}", path, lineno) from None
        if d.get("kind") == "header":
            header = d
            continue
        try:
            samples.append(SequenceSample.from_dict(d))
        except (KeyError, TypeError, ContractError) as e:
            raise DataFormatError(f"bad sequence record: {e}", path, lineno) from None
    return header, samples


def with_split(samples, assignment) -> list[SequenceSample]:
    return [replace(s, split=assignment[s.scene_id]) for s in samples]


def restored_order(sample: SequenceSample) -> list[Shot]:
    """Apply the inverse of the label's permutation to the presented shots."""
    perm = unrank(sample.label, sample.k)
    return apply_shuffle(sample.presented_shots, perm.inverse())
