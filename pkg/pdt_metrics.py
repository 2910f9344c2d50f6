#!/usr/bin/env python3
"""
PDT Metrics Module
Pharmaceutical evaluation criterion: a prediction counts as a hit when it
is within 10 s of the measured disintegration time. Everything here works
in seconds, never on normalized values.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd


PDT_TOLERANCE_SEC = 10.0
EVALUATION_COLUMNS = ['set', 'row_index', 'label_sec', 'prediction_sec', 'abs_error_sec', 'hit']

logger = logging.getLogger(__name__)


def _paired(predictions, labels):
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch: {predictions.size} predictions vs {labels.size} labels")
    if predictions.size == 0:
        raise ValueError("cannot score an empty set")
    return predictions, labels


def accuracy_pdt(predictions: Sequence[float], labels: Sequence[float],
                 tolerance: float = PDT_TOLERANCE_SEC) -> float:
    """Fraction of predictions with |prediction - label| <= tolerance (inclusive)"""
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    predictions, labels = _paired(predictions, labels)
    hits = np.abs(predictions - labels) <= tolerance
    return float(np.count_nonzero(hits)) / predictions.size


@dataclass(frozen=True)
class EvaluationResult:
    set_name: str
    accuracy_pdt: float
    mae: float
    rmse: float
    n: int
    table: pd.DataFrame

    def summary(self) -> str:
        return (f"{self.set_name}: accuracy_PDT {format_percentage(self.accuracy_pdt)}% "
                f"MAE {self.mae:.2f}s RMSE {self.rmse:.2f}s (n={self.n})")


def score(predictions: Sequence[float], labels: Sequence[float], set_name: str = 'test',
          row_indices: Optional[Sequence[int]] = None,
          tolerance: float = PDT_TOLERANCE_SEC) -> EvaluationResult:
    """EvaluationResult from predictions already in seconds"""
    predictions, labels = _paired(predictions, labels)
    if row_indices is None:
        row_indices = range(predictions.size)
    errors = np.abs(predictions - labels)
    hits = errors <= tolerance

    table = pd.DataFrame({
        'set': set_name,
        'row_index': np.asarray(list(row_indices), dtype=np.int64),
        'label_sec': labels,
        'prediction_sec': predictions,
        'abs_error_sec': errors,
        'hit': hits.astype(np.int64),
    }, columns=EVALUATION_COLUMNS)

    return EvaluationResult(
        set_name=set_name,
        accuracy_pdt=accuracy_pdt(predictions, labels, tolerance),
        mae=float(np.mean(errors)),
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        n=int(predictions.size),
        table=table,
    )


def evaluate(predictor: Callable[[np.ndarray], np.ndarray], raw_features: np.ndarray,
             labels_sec: Sequence[float], set_name: str = 'test',
             row_indices: Optional[Sequence[int]] = None) -> EvaluationResult:
    """Score a set of raw encoded rows.

    ``predictor`` maps a raw row matrix to disintegration times in seconds,
    e.g. ``functools.partial(predict_batch, network, normalizer)``.
    """
    raw_features = np.asarray(raw_features, dtype=np.float64)
    if raw_features.size == 0:
        raise ValueError(f"cannot evaluate an empty {set_name} set")
    predictions = predictor(raw_features)
    result = score(predictions, labels_sec, set_name, row_indices)
    logger.debug(result.summary())
    return result


def evaluation_frame(results: Sequence[EvaluationResult]) -> pd.DataFrame:
    """Per-sample rows of several sets stacked into the plottable CSV layout"""
    if not results:
        return pd.DataFrame(columns=EVALUATION_COLUMNS)
    return pd.concat([r.table for r in results], ignore_index=True)[EVALUATION_COLUMNS]


def format_percentage(fraction: float) -> str:
    """0.856 -> '85.60'"""
    return f"{fraction * 100:.2f}"
