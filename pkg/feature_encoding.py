#!/usr/bin/env python3
"""
Feature Encoding Module
Turns formulation records into fixed-length numeric vectors and scales
features and targets into the network's [0, 1] operating range.
"""

import io
import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from formulation_data import (
    DESCRIPTOR_FIELDS, EXCIPIENT_CATEGORIES, MANUFACTURE_COLUMNS, SLOT_LAYOUT,
    Corpus, DataValidationError, FormulationRecord, labeled_records,
)


# Fixed target scale: disintegration times span 0-100 s, so the 10 s
# tolerance is a constant 0.1 in normalized space
TARGET_MAX_SEC = 100.0
TARGET_ROW = '__target__'

logger = logging.getLogger(__name__)


class EncodingError(DataValidationError):
    """Record cannot be encoded with the codec's vocabulary"""
    pass


class CodecMismatchError(DataValidationError):
    """Input was encoded with a different feature layout than the model expects"""
    pass


@dataclass(frozen=True)
class FeatureCodec:
    """Deterministic record -> vector layout"""
    excipient_vocab: Mapping[str, Tuple[str, ...]]
    feature_names: Tuple[str, ...]

    @property
    def dimension(self) -> int:
        return len(self.feature_names)

    def check_compatible(self, other: 'FeatureCodec') -> None:
        if tuple(other.feature_names) != tuple(self.feature_names):
            raise CodecMismatchError(
                f"codec mismatch: model expects {self.dimension} features, "
                f"input codec has {other.dimension}"
            )


@dataclass(frozen=True)
class Normalizer:
    """Per-feature min/max fitted on training rows, plus imputation fills"""
    feature_names: Tuple[str, ...]
    minimum: np.ndarray
    maximum: np.ndarray
    fill: np.ndarray
    target_max: float = TARGET_MAX_SEC

    def __eq__(self, other) -> bool:
        if not isinstance(other, Normalizer):
            return NotImplemented
        return (
            tuple(self.feature_names) == tuple(other.feature_names)
            and np.array_equal(self.minimum, other.minimum)
            and np.array_equal(self.maximum, other.maximum)
            and np.array_equal(self.fill, other.fill)
            and self.target_max == other.target_max
        )


@dataclass(frozen=True)
class EncodedDataset:
    """Normalized features/targets for labeled records only"""
    features: np.ndarray
    targets: np.ndarray
    raw_features: np.ndarray
    labels_sec: np.ndarray
    record_indices: Tuple[int, ...]
    codec: FeatureCodec
    normalizer: Normalizer

    def __len__(self) -> int:
        return len(self.record_indices)

    def row_of(self, corpus_index: int) -> int:
        return self.record_indices.index(corpus_index)


def build_codec(corpus: Corpus) -> FeatureCodec:
    """Codec from the corpus vocabulary (first-appearance order)"""
    if len(corpus) == 0:
        raise EncodingError("cannot build a codec from an empty corpus")

    vocab = {category: tuple(corpus.excipient_vocab.get(category, ())) for category in EXCIPIENT_CATEGORIES}
    names = [f'api.{name}' for name in DESCRIPTOR_FIELDS]
    names.append('api_dose_mg')
    for slot, category in SLOT_LAYOUT:
        names.extend(f'{slot}={excipient}' for excipient in vocab[category])
        names.append(f'{slot}_mg')
    names.extend(MANUFACTURE_COLUMNS)

    codec = FeatureCodec(excipient_vocab=vocab, feature_names=tuple(names))
    logger.debug(f"Built codec with {codec.dimension} features")
    return codec


def encode(codec: FeatureCodec, record: FormulationRecord) -> np.ndarray:
    """Raw (unnormalized) feature vector.

    An excipient listed at 0 mg is absent: all-zero one-hot and dose 0.
    Absent manufacture parameters are NaN.
    """
    vector = list(record.api.as_vector())
    vector.append(float(record.api_dose_mg))

    for slot, category in SLOT_LAYOUT:
        names = codec.excipient_vocab[category]
        one_hot = [0.0] * len(names)
        dose = 0.0
        entry = record.excipient_in(slot)
        if entry is not None:
            if entry.name not in names:
                raise EncodingError(f"unknown {category.lower()} excipient '{entry.name}' in slot {slot}")
            # 0 mg: slot coded but the excipient is absent from this formulation
            if entry.dose_mg > 0:
                one_hot[names.index(entry.name)] = 1.0
                dose = float(entry.dose_mg)
        vector.extend(one_hot)
        vector.append(dose)

    for col in MANUFACTURE_COLUMNS:
        value = getattr(record, col)
        vector.append(np.nan if value is None else float(value))

    return np.asarray(vector, dtype=np.float64)


def encode_records(codec: FeatureCodec, records: Sequence[FormulationRecord]) -> np.ndarray:
    if not records:
        return np.empty((0, codec.dimension), dtype=np.float64)
    return np.vstack([encode(codec, record) for record in records])


def fit_normalizer(matrix: np.ndarray, targets: Optional[np.ndarray] = None,
                   feature_names: Optional[Sequence[str]] = None) -> Normalizer:
    """Capture per-column min/max and mean fills over the given (training) rows.

    NaN entries are ignored; a column with no observed value is degenerate at 0.
    Targets do not shape the normalizer: their scale is fixed at 100 s.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on an empty matrix")

    observed = ~np.isnan(matrix)
    has_value = observed.any(axis=0)
    safe = np.where(observed, matrix, 0.0)
    counts = observed.sum(axis=0)

    minimum = np.where(has_value, np.where(observed, matrix, np.inf).min(axis=0), 0.0)
    maximum = np.where(has_value, np.where(observed, matrix, -np.inf).max(axis=0), 0.0)
    fill = np.where(has_value, safe.sum(axis=0) / np.maximum(counts, 1), 0.0)

    if feature_names is None:
        feature_names = [f'x{i}' for i in range(matrix.shape[1])]
    if targets is not None and len(targets) != matrix.shape[0]:
        raise ValueError(f"targets length {len(targets)} != rows {matrix.shape[0]}")

    return Normalizer(
        feature_names=tuple(feature_names),
        minimum=minimum, maximum=maximum, fill=fill,
        target_max=TARGET_MAX_SEC,
    )


def impute(normalizer: Normalizer, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.where(np.isnan(values), normalizer.fill, values)


def normalize(normalizer: Normalizer, values: np.ndarray) -> np.ndarray:
    """Min-max scale a vector or row matrix into [0, 1], clamping out-of-range values"""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != len(normalizer.minimum):
        raise ValueError(f"expected {len(normalizer.minimum)} features, got {values.shape[-1]}")
    values = impute(normalizer, values)
    span = normalizer.maximum - normalizer.minimum
    degenerate = span <= 0
    scaled = (values - normalizer.minimum) / np.where(degenerate, 1.0, span)
    scaled = np.where(degenerate, 0.0, scaled)
    return np.clip(scaled, 0.0, 1.0)


def denormalize_features(normalizer: Normalizer, scaled: np.ndarray) -> np.ndarray:
    scaled = np.asarray(scaled, dtype=np.float64)
    span = normalizer.maximum - normalizer.minimum
    return normalizer.minimum + scaled * np.where(span > 0, span, 0.0)


def normalize_target(normalizer: Normalizer, seconds):
    return np.clip(np.asarray(seconds, dtype=np.float64) / normalizer.target_max, 0.0, 1.0)


def denormalize_target(normalizer: Normalizer, scaled):
    return np.asarray(scaled, dtype=np.float64) * normalizer.target_max


def encode_dataset(corpus: Corpus, codec: FeatureCodec,
                   fit_rows: Optional[Sequence[int]] = None) -> EncodedDataset:
    """Encode and normalize every labeled record.

    ``fit_rows`` are indices into the labeled-row space; the normalizer is
    fitted on those rows only (all labeled rows when omitted).
    """
    indices = labeled_records(corpus)
    records = [corpus.records[i] for i in indices]
    raw = encode_records(codec, records)
    labels = np.asarray([r.disintegration_time_sec for r in records], dtype=np.float64)

    if fit_rows is None:
        fit_rows = range(len(indices))
    fit_rows = list(fit_rows)
    if not fit_rows:
        raise EncodingError("no rows to fit the normalizer on")

    normalizer = fit_normalizer(raw[fit_rows], labels[fit_rows], feature_names=codec.feature_names)
    return EncodedDataset(
        features=normalize(normalizer, raw) if len(raw) else raw,
        targets=normalize_target(normalizer, labels),
        raw_features=raw,
        labels_sec=labels,
        record_indices=tuple(indices),
        codec=codec,
        normalizer=normalizer,
    )


def normalizer_frame(normalizer: Normalizer) -> pd.DataFrame:
    """Tabular form: one line per feature plus a leading target row"""
    rows = [{'feature': TARGET_ROW, 'min': 0.0, 'max': normalizer.target_max, 'fill': 0.0}]
    rows.extend(
        {'feature': name, 'min': lo, 'max': hi, 'fill': fill}
        for name, lo, hi, fill in zip(normalizer.feature_names, normalizer.minimum,
                                      normalizer.maximum, normalizer.fill)
    )
    return pd.DataFrame(rows, columns=['feature', 'min', 'max', 'fill'])


def normalizer_to_text(normalizer: Normalizer) -> str:
    return normalizer_frame(normalizer).to_csv(index=False, lineterminator='\n')


def normalizer_from_text(text: str) -> Normalizer:
    frame = pd.read_csv(io.StringIO(text), float_precision='round_trip')
    if list(frame.columns) != ['feature', 'min', 'max', 'fill'] or frame.empty \
            or frame['feature'].iloc[0] != TARGET_ROW:
        raise DataValidationError("malformed normalizer file")
    body = frame.iloc[1:]
    return Normalizer(
        feature_names=tuple(body['feature'].astype(str)),
        minimum=body['min'].to_numpy(dtype=np.float64),
        maximum=body['max'].to_numpy(dtype=np.float64),
        fill=body['fill'].to_numpy(dtype=np.float64),
        target_max=float(frame['max'].iloc[0]),
    )


def normalizer_to_dict(normalizer: Normalizer) -> Dict[str, object]:
    return {
        'target_max': float(normalizer.target_max),
        'feature_names': list(normalizer.feature_names),
        'minimum': [float(v) for v in normalizer.minimum],
        'maximum': [float(v) for v in normalizer.maximum],
        'fill': [float(v) for v in normalizer.fill],
    }


def normalizer_from_dict(data: Mapping[str, object]) -> Normalizer:
    return Normalizer(
        feature_names=tuple(data['feature_names']),
        minimum=np.asarray(data['minimum'], dtype=np.float64),
        maximum=np.asarray(data['maximum'], dtype=np.float64),
        fill=np.asarray(data['fill'], dtype=np.float64),
        target_max=float(data['target_max']),
    )
