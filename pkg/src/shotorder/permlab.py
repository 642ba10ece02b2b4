"""Permutations, ordering labels and Kendall tau distances.

Element values are zero based: the ordering usually written "123" is
``Permutation((0, 1, 2))``.  An ordering label is the lexicographic rank of
the shuffle permutation ``p`` with ``shuffled[i] = original[p[i]]``.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import CapacityError, ContractError, DimensionError

MAX_K = 7


@dataclass(frozen=True)
class Permutation:
    mapping: tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(int(v) for v in self.mapping)
        k = len(mapping)
        if k < 2:
            raise ContractError(f"permutation needs k >= 2, got {k}")
        if sorted(mapping) != list(range(k)):
            raise ContractError(f"{mapping} is not a bijection on 0..{k - 1}")
        object.__setattr__(self, "mapping", mapping)

    @property
    def k(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, k: int) -> Permutation:
        return cls(tuple(range(k)))

    def inverse(self) -> Permutation:
        inv = [0] * self.k
        for i, v in enumerate(self.mapping):
            inv[v] = i
        return Permutation(tuple(inv))

    def compose(self, other: Permutation) -> Permutation:
        """``(self o other)[i] = self[other[i]]``."""
        _check_same_k(self.k, other.k)
        return Permutation(tuple(self.mapping[j] for j in other.mapping))

    def __len__(self):
        return self.k

    def __iter__(self):
        return iter(self.mapping)

    def __getitem__(self, i):
        return self.mapping[i]

    def __str__(self):
        # one-based digit notation, e.g. "231"
        return "".join(str(v + 1) for v in self.mapping)


@dataclass(frozen=True)
class OrderingLabel:
    class_index: int
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ContractError(f"k must be >= 2, got {self.k}")
        n = math.factorial(self.k)
        if not 0 <= self.class_index < n:
            raise ContractError(f"class index {self.class_index} outside [0, {n})")


def _check_same_k(ka, kb):
    if ka != kb:
        raise DimensionError(f"k mismatch: {ka} vs {kb}")


def kendall_tau_distance(a: Permutation, b: Permutation) -> int:
    """Count element pairs that are ordered oppositely in ``a`` and ``b``."""
    _check_same_k(a.k, b.k)
    n = a.k
    count = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            if (a[i] < a[j] and b[i] > b[j]) or (a[i] > a[j] and b[i] < b[j]):
                count += 1
    return count


def rank(p: Permutation) -> OrderingLabel:
    k = p.k
    remaining = list(range(k))
    index = 0
    for pos, v in enumerate(p.mapping):
        smaller = remaining.index(v)
        index += smaller * math.factorial(k - 1 - pos)
        remaining.pop(smaller)
    return OrderingLabel(index, k)


def unrank(label: OrderingLabel | int, k: int | None = None) -> Permutation:
    if not isinstance(label, OrderingLabel):
        if k is None:
            raise ContractError("k is required when unranking a bare integer")
        label = OrderingLabel(int(label), k)
    k = label.k
    index = label.class_index
    remaining = list(range(k))
    out = []
    for pos in range(k):
        f = math.factorial(k - 1 - pos)
        q, index = divmod(index, f)
        out.append(remaining.pop(q))
    return Permutation(tuple(out))


def all_permutations(k: int) -> list[Permutation]:
    """All k! permutations in lexicographic (= label) order."""
    return [Permutation(m) for m in itertools.permutations(range(k))]


def num_classes(k: int) -> int:
    return math.factorial(k)


def apply_shuffle(items: Sequence, p: Permutation) -> list:
    if len(items) != p.k:
        raise DimensionError(f"{len(items)} items for a permutation of size {p.k}")
    return [items[j] for j in p.mapping]


def restore(shuffled: Sequence, p: Permutation) -> list:
    """Undo ``apply_shuffle(items, p)``."""
    return apply_shuffle(shuffled, p.inverse())


@dataclass(frozen=True, eq=False)
class KtdMatrix:
    k: int
    entries: np.ndarray

    def __post_init__(self):
        n = math.factorial(self.k)
        if self.entries.shape != (n, n):
            raise DimensionError(f"expected {(n, n)} entries, got {self.entries.shape}")
        self.entries.setflags(write=False)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def max_distance(self) -> int:
        return self.k * (self.k - 1) // 2

    def __getitem__(self, idx):
        return self.entries[idx]

    def __eq__(self, other):
        if not isinstance(other, KtdMatrix):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((self.k, self.entries.tobytes()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(str(i) for i in range(self.size)) + "\n")
        for row in self.entries:
            buf.write(",".join(str(int(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> KtdMatrix:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        rows = [[int(v) for v in ln.split(",")] for ln in lines[1:]]
        entries = np.array(rows, dtype=np.int32)
        k = next(k for k in range(2, MAX_K + 2) if math.factorial(k) == len(rows))
        return cls(k, entries)


def build_ktd_matrix(k: int, max_k: int = MAX_K) -> KtdMatrix:
    if k < 2:
        raise ContractError(f"k must be >= 2, got {k}")
    if k > max_k:
        raise CapacityError(
            f"k={k} exceeds the cap of {max_k}: the matrix has ({k}!)^2 = "
            f"{math.factorial(k) ** 2} cells and grows factorially"
        )
    return _build_cached(k)


@lru_cache(maxsize=None)
def _build_cached(k: int) -> KtdMatrix:
    # vectorised over all pairs: each permutation becomes a +-1 vector of
    # pairwise position orders, and discordant pairs are (P - s_a . s_b) / 2
    perms = np.array(list(itertools.permutations(range(k))), dtype=np.int8)
    i, j = np.triu_indices(k, 1)
    signs = np.sign(perms[:, i] - perms[:, j]).astype(np.float32)
    agree = signs @ signs.T
    entries = np.rint((len(i) - agree) / 2).astype(np.int32)
    return KtdMatrix(k, entries)
