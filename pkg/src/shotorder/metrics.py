"""Evaluation metrics over batches of ordering-class logits.

All argmax / top-k decisions break ties toward the lowest class index.
Recall and precision are macro averaged; classes with no support are left
out of the recall average.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .permlab import KtdMatrix

REPORT_KEYS = (
    "top1_accuracy",
    "topk_accuracy",
    "top_k",
    "kendall_tau_distance",
    "recall",
    "precision",
)


@dataclass(frozen=True, eq=False)
class PredictionBatch:
    logits: np.ndarray
    truths: np.ndarray
    k: int

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        truths = np.asarray(self.truths, dtype=np.int64)
        n_classes = math.factorial(self.k)
        if logits.ndim != 2 or logits.shape[0] == 0:
            raise ContractError(f"need a non-empty N x {n_classes} logit matrix")
        if logits.shape[1] != n_classes:
            raise DimensionError(f"logit rows have width {logits.shape[1]}, expected {n_classes}")
        if truths.shape != (logits.shape[0],):
            raise DimensionError(f"{truths.shape[0]} truths for {logits.shape[0]} rows")
        if truths.min() < 0 or truths.max() >= n_classes:
            raise ContractError(f"truth labels must lie in [0, {n_classes})")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "truths", truths)

    @property
    def n(self) -> int:
        return self.logits.shape[0]

    @property
    def n_classes(self) -> int:
        return self.logits.shape[1]

    def predictions(self) -> np.ndarray:
        # np.argmax returns the first maximal index
        return np.argmax(self.logits, axis=1)


@dataclass(frozen=True)
class MetricsReport:
    top1: float
    topk: float
    mean_ktd: float
    recall: float
    precision: float
    k_used_for_topk: int

    def to_dict(self) -> dict:
        return {
            "top1_accuracy": self.top1,
            "topk_accuracy": self.topk,
            "top_k": self.k_used_for_topk,
            "kendall_tau_distance": self.mean_ktd,
            "recall": self.recall,
            "precision": self.precision,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        missing = set(REPORT_KEYS) - set(d)
        if missing:
            raise ContractError(f"report is missing keys {sorted(missing)}")
        return cls(
            top1=float(d["top1_accuracy"]),
            topk=float(d["topk_accuracy"]),
            mean_ktd=float(d["kendall_tau_distance"]),
            recall=float(d["recall"]),
            precision=float(d["precision"]),
            k_used_for_topk=int(d["top_k"]),
        )

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        return cls.from_dict(json.loads(text))


def top1_accuracy(batch: PredictionBatch) -> float:
    return float(np.mean(batch.predictions() == batch.truths))


def topk_indices(logits: np.ndarray, top_k: int) -> np.ndarray:
    order = np.argsort(-logits, axis=1, kind="stable")
    return order[:, :top_k]


def topk_accuracy(batch: PredictionBatch, top_k: int) -> float:
    if not 1 <= top_k <= batch.n_classes:
        raise ContractError(f"top_k must lie in [1, {batch.n_classes}], got {top_k}")
    top = topk_indices(batch.logits, top_k)
    hit = (top == batch.truths[:, None]).any(axis=1)
    return float(np.mean(hit))


def mean_kendall_tau(batch: PredictionBatch, K: KtdMatrix) -> float:
    if K.k != batch.k:
        raise DimensionError(f"distance matrix is for k={K.k}, batch has k={batch.k}")
    d = K.entries[batch.predictions(), batch.truths].astype(np.float64)
    return float(np.sum(d) / batch.n)


def _confusion_counts(batch):
    n = batch.n_classes
    pred = batch.predictions()
    tp = np.bincount(pred[pred == batch.truths], minlength=n)
    support = np.bincount(batch.truths, minlength=n)
    predicted = np.bincount(pred, minlength=n)
    return tp, support, predicted


def macro_recall(batch: PredictionBatch) -> float:
    tp, support, _ = _confusion_counts(batch)
    present = support > 0
    return float(np.mean(tp[present] / support[present]))


def macro_precision(batch: PredictionBatch) -> float:
    tp, support, predicted = _confusion_counts(batch)
    classes = (support > 0) | (predicted > 0)
    prec = np.zeros(batch.n_classes)
    hit = predicted > 0
    prec[hit] = tp[hit] / predicted[hit]
    return float(np.mean(prec[classes]))


def compute_report(batch: PredictionBatch, K: KtdMatrix, top_k: int = 3) -> MetricsReport:
    return MetricsReport(
        top1=top1_accuracy(batch),
        topk=topk_accuracy(batch, top_k),
        mean_ktd=mean_kendall_tau(batch, K),
        recall=macro_recall(batch),
        precision=macro_precision(batch),
        k_used_for_topk=top_k,
    )
