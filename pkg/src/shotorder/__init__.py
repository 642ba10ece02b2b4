"""Shot sequence ordering: permutation labels, KTD-aware loss, metrics and a small video transformer.

The torch-backed pieces live in ``shotorder.nn`` and ``shotorder.dataforge.loader``
and are only imported on demand.
"""

from .errors import (
    CapacityError,
    ContractError,
    DataFormatError,
    DimensionError,
    NumericError,
    ShotOrderError,
    TrainingError,
    UnusableScene,
)
from .ktdce import LossConfig, LossValue, OffsetMatrix, ktdce_loss
from .metrics import MetricsReport, PredictionBatch, compute_report
from .permlab import (
    KtdMatrix,
    OrderingLabel,
    Permutation,
    build_ktd_matrix,
    kendall_tau_distance,
    rank,
    unrank,
)

__version__ = "0.1.0"
