"""Movie metadata records, shot-label provisions and genre x shot-class analysis."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, DataFormatError
from ..nn.config import CATEGORIES, DEFAULT_CARDINALITIES, GENRES

PROVIDERS = ("ground_truth", "uqn", "clip", "clip_prompt", "uniform")


@dataclass
class MetaRecord:
    scene_id: str
    imdb_id: str = ""
    title: str = ""
    description: str = ""
    genres: list[str] = field(default_factory=list)
    release_year: int | None = None
    rating_value: float | None = None
    rating_count: int | None = None
    content_rating: str = ""
    keywords: list[str] = field(default_factory=list)
    duration_minutes: int | None = None
    actors: list[str] = field(default_factory=list)
    director: str = ""
    creators: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.scene_id:
            raise ContractError("scene_id must be non-empty")
        self.genres = list(self.genres)
        if any(not g for g in self.genres):
            raise ContractError(f"{self.scene_id}: empty genre name")

    def to_dict(self) -> dict:
        return asdict(self)


def read_meta(path) -> dict[str, MetaRecord]:
    path = Path(path)
    known = set(MetaRecord.__dataclass_fields__)
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            rec = MetaRecord(**{k: v for k, v in d.items() if k in known})
        except (json.JSONDecodeError, TypeError, ContractError) as e:
            raise DataFormatError(f"bad metadata record: {e}", path, lineno) from None
        out[rec.scene_id] = rec
    return out


def write_meta(records, path):
    lines = [json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":")) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def genre_vector(genres, vocab=GENRES, primary_only: bool = False) -> np.ndarray:
    """Normalised multi-hot vector over ``vocab`` (one-hot with ``primary_only``)."""
    v = np.zeros(len(vocab))
    names = list(genres)[:1] if primary_only else list(genres)
    for g in names:
        try:
            v[vocab.index(g)] = 1.0
        except ValueError:
            raise DataFormatError(f"unknown genre {g!r}") from None
    if v.sum() == 0:
        # no genre information: spread evenly
        v[:] = 1.0
    return v / v.sum()


@dataclass
class LabelProvision:
    """Per (scene_id, shot_index) category probability vectors."""

    cardinalities: tuple[int, ...] = DEFAULT_CARDINALITIES
    provider: str = "ground_truth"
    vectors: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cardinalities = tuple(int(c) for c in self.cardinalities)
        if self.provider not in PROVIDERS:
            raise ContractError(f"provider must be one of {PROVIDERS}")

    def set(self, scene_id: str, shot_index: int, category_vectors):
        vecs = [np.asarray(v, dtype=np.float64) for v in category_vectors]
        for name, v, card in zip(CATEGORIES, vecs, self.cardinalities):
            if v.shape != (card,):
                raise ContractError(f"{name} vector has {v.size} entries, expected {card}")
            if np.any(v < 0) or abs(v.sum() - 1) > 1e-6:
                raise ContractError(f"{scene_id}/{shot_index} {name}: not a probability vector")
        self.vectors[(scene_id, int(shot_index))] = vecs

    def get(self, scene_id: str, shot_index: int) -> list[np.ndarray]:
        if self.provider == "uniform" and (scene_id, shot_index) not in self.vectors:
            return [np.full(c, 1.0 / c) for c in self.cardinalities]
        try:
            return self.vectors[(scene_id, int(shot_index))]
        except KeyError:
            raise DataFormatError(f"no shot labels for {scene_id} shot {shot_index}") from None

    def scene_ids(self) -> set[str]:
        return {sid for sid, _ in self.vectors}

    def shots_of(self, scene_id):
        return sorted(i for sid, i in self.vectors if sid == scene_id)

    def to_csv(self) -> str:
        width = max(self.cardinalities)
        buf = io.StringIO()
        buf.write("# provider: " + self.provider + "\n")
        buf.write("# cardinalities: " + ",".join(
            f"{n}={c}" for n, c in zip(CATEGORIES, self.cardinalities)) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scene_id", "shot_index", "category"] + [f"p{i}" for i in range(width)])
        for (sid, idx) in sorted(self.vectors):
            for name, v in zip(CATEGORIES, self.vectors[(sid, idx)]):
                w.writerow([sid, idx, name] + [repr(float(x)) for x in v] + [""] * (width - len(v)))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, path=None) -> LabelProvision:
        lines = text.splitlines()
        provider = "ground_truth"
        cards = None
        body_start = 0
        for i, line in enumerate(lines):
            if not line.startswith("#"):
                body_start = i
                break
            key, _, value = line[1:].partition(":")
            key, value = key.strip(), value.strip()
            if key == "provider":
                provider = value
            elif key == "cardinalities":
                parsed = dict(item.split("=") for item in value.split(","))
                try:
                    cards = tuple(int(parsed[n]) for n in CATEGORIES)
                except (KeyError, ValueError):
                    raise DataFormatError("cardinality header must name all four categories", path, i + 1) from None
        if cards is None:
            raise DataFormatError("missing '# cardinalities:' header", path)
        prov = cls(cards, provider)
        pending = defaultdict(dict)
        reader = csv.reader(lines[body_start + 1:])
        for offset, row in enumerate(reader):
            lineno = body_start + 2 + offset
            if not row:
                continue
            try:
                sid, idx, cat = row[0], int(row[1]), row[2]
                c = CATEGORIES.index(cat)
                probs = [float(x) for x in row[3:3 + cards[c]]]
            except (ValueError, IndexError):
                raise DataFormatError(f"malformed label row {row!r}", path, lineno) from None
            pending[(sid, idx)][c] = probs
        for (sid, idx), cats in pending.items():
            if len(cats) != len(CATEGORIES):
                raise DataFormatError(f"{sid} shot {idx}: missing categories", path)
            try:
                prov.set(sid, idx, [cats[c] for c in range(len(CATEGORIES))])
            except ContractError as e:
                raise DataFormatError(str(e), path) from None
        return prov

    def write(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def read(cls, path) -> LabelProvision:
        return cls.from_csv(Path(path).read_text(), path)


def genre_shot_histogram(meta: dict[str, MetaRecord], labels: LabelProvision) -> list[tuple[str, str, int, float]]:
    """Rows (genre, category, class, frequency); frequencies sum to 1 per (genre, category).

    Multi-genre scenes count toward each of their genres.  Probability vectors
    contribute their mass, so one-hot labels reduce to plain counts.
    """
    joined = sorted(set(meta) & labels.scene_ids())
    if not joined:
        raise DataFormatError("metadata and shot labels share no scene_id")
    mass = {}
    for sid in joined:
        for g in meta[sid].genres:
            acc = mass.setdefault(g, [np.zeros(c) for c in labels.cardinalities])
            for idx in labels.shots_of(sid):
                for c, v in enumerate(labels.get(sid, idx)):
                    acc[c] += v
    rows = []
    for g in sorted(mass):
        for c, name in enumerate(CATEGORIES):
            total = mass[g][c].sum()
            for cls_idx, m in enumerate(mass[g][c]):
                rows.append((g, name, cls_idx, float(m / total)))
    return rows


def histogram_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["genre", "category", "class", "frequency"])
    for g, cat, cls_idx, f in rows:
        w.writerow([g, cat, cls_idx, repr(f)])
    return buf.getvalue()
