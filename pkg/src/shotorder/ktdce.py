"""KTD-CE loss: cross-entropy + alpha * (K + O)-indexed distance + beta * |O|_1.

``faithful`` mode indexes the distance table with the argmax prediction, so
the distance term is piecewise constant in the logits and only the offset
matrix O receives gradient from it.  ``soft`` mode replaces the argmax with
the softmax expectation ``sum_j p_j (K + O)[j, y]``, which also pushes
gradient into the logits.

All computations run in float64.  Gradients are closed form; they are
checked against central differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, NumericError
from .permlab import KtdMatrix

MODES = ("faithful", "soft")
INDEX_ORDERS = ("pred_first", "truth_first")


@dataclass(eq=False)
class OffsetMatrix:
    k: int
    entries: np.ndarray = None
    trainable: bool = True

    def __post_init__(self):
        n = math.factorial(self.k)
        if self.entries is None:
            self.entries = np.zeros((n, n))
        else:
            self.entries = np.array(self.entries, dtype=np.float64)
        if self.entries.shape != (n, n):
            raise DimensionError(f"offset matrix must be {(n, n)}, got {self.entries.shape}")
        if not np.all(np.isfinite(self.entries)):
            raise NumericError("offset matrix has non-finite entries")

    def to_csv(self) -> str:
        n = self.entries.shape[0]
        lines = [",".join(str(i) for i in range(n))]
        lines += [",".join(repr(float(v)) for v in row) for row in self.entries]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    beta: float = 0.1
    mode: str = "faithful"
    index_order: str = "pred_first"

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ContractError(f"{name} must be finite and >= 0, got {v}")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.index_order not in INDEX_ORDERS:
            raise ContractError(f"index_order must be one of {INDEX_ORDERS}")

    @classmethod
    def ce_only(cls) -> LossConfig:
        return cls(alpha=0.0, beta=0.0)


@dataclass(frozen=True)
class LossValue:
    total: float
    ce_part: float
    ktd_part: float
    l1_part: float
    details: dict = field(default_factory=dict, compare=False, repr=False)


def _as_array(m):
    if isinstance(m, (KtdMatrix, OffsetMatrix)):
        return np.asarray(m.entries, dtype=np.float64)
    return np.asarray(m, dtype=np.float64)


def _check_inputs(logits, truths):
    logits = np.asarray(logits, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise DimensionError("logits must be a non-empty N x C matrix")
    if truths.shape != (logits.shape[0],):
        raise DimensionError(f"{truths.shape} truths for {logits.shape[0]} rows")
    if truths.min() < 0 or truths.max() >= logits.shape[1]:
        raise ContractError("truth label out of range")
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    return logits, truths


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def cross_entropy(logits, truths) -> float:
    logits, truths = _check_inputs(logits, truths)
    logp = log_softmax(logits)
    return float(-np.mean(logp[np.arange(len(truths)), truths]))


def ce_grad(logits, truths) -> np.ndarray:
    """d(mean CE)/d(logits): (softmax - onehot) / N."""
    logits, truths = _check_inputs(logits, truths)
    g = softmax(logits)
    g[np.arange(len(truths)), truths] -= 1.0
    return g / len(truths)


def _table(K, O):
    Kv, Ov = _as_array(K), _as_array(O)
    if Kv.shape != Ov.shape:
        raise DimensionError(f"K is {Kv.shape} but O is {Ov.shape}")
    return Kv + Ov


def _distance_columns(M, truths, index_order):
    """Row r holds the costs of predicting each class when the truth is truths[r]."""
    if index_order == "pred_first":
        return M[:, truths].T
    return M[truths, :]


def ktd_term(logits, truths, K, O, mode: str = "faithful", index_order: str = "pred_first") -> float:
    logits, truths = _check_inputs(logits, truths)
    M = _table(K, O)
    if M.shape[0] != logits.shape[1]:
        raise DimensionError(f"distance table is {M.shape}, logits have {logits.shape[1]} classes")
    costs = _distance_columns(M, truths, index_order)
    if mode == "faithful":
        pred = np.argmax(logits, axis=1)
        values = costs[np.arange(len(truths)), pred]
    elif mode == "soft":
        values = (softmax(logits) * costs).sum(axis=1)
    else:
        raise ContractError(f"unknown mode {mode!r}")
    return float(np.mean(values))


def l1_reg(O) -> float:
    Ov = _as_array(O)
    if not np.all(np.isfinite(Ov)):
        raise NumericError("offset matrix has non-finite entries")
    return float(np.abs(Ov).sum())


def ktdce_loss(logits, truths, K, O, config: LossConfig = LossConfig()) -> LossValue:
    ce = cross_entropy(logits, truths)
    ktd = ktd_term(logits, truths, K, O, config.mode, config.index_order)
    l1 = l1_reg(O)
    total = ce + config.alpha * ktd + config.beta * l1
    return LossValue(total, ce, ktd, l1)


def grad_logits(logits, truths, K, O, config: LossConfig = LossConfig()) -> np.ndarray:
    g = ce_grad(logits, truths)
    if config.mode == "faithful" or config.alpha == 0:
        # the argmax-indexed term is piecewise constant in the logits
        return g
    logits, truths = _check_inputs(logits, truths)
    costs = _distance_columns(_table(K, O), truths, config.index_order)
    p = softmax(logits)
    expected = (p * costs).sum(axis=1, keepdims=True)
    return g + config.alpha * p * (costs - expected) / len(truths)


def grad_offset(logits, truths, K, O, config: LossConfig = LossConfig()) -> np.ndarray:
    logits, truths = _check_inputs(logits, truths)
    Ov = _as_array(O)
    n = len(truths)
    if config.mode == "faithful":
        weights = np.zeros((n, logits.shape[1]))
        weights[np.arange(n), np.argmax(logits, axis=1)] = 1.0
    else:
        weights = softmax(logits)
    # visit mass per row spread over predicted classes, scattered to cells
    visits = np.zeros_like(Ov)
    if config.index_order == "pred_first":
        np.add.at(visits.T, truths, weights)
    else:
        np.add.at(visits, truths, weights)
    return config.alpha * visits / n + config.beta * np.sign(Ov)
