#!/usr/bin/env python3
"""
Artifact Export Module
Writes and reads the files that connect the pipeline stages: split files,
model containers, normalizer tables, training reports and evaluation CSVs.

Gotchas:
- Everything written here must be byte-identical across runs with the same
  seeds, so no timestamps or wall times ever go into an artifact.
- The model container is a magic line followed by TOML; tomli-w writes
  floats with repr, so parameters round-trip exactly.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
import tomli
import tomli_w

from feature_encoding import (
    FeatureCodec, Normalizer, normalizer_from_dict, normalizer_to_dict, normalizer_to_text,
)
from formulation_data import DataValidationError
from neural_network import Network, NetworkConfig, TrainingReport
from pdt_metrics import EvaluationResult, evaluation_frame, format_percentage


MODEL_MAGIC = 'ODTNET1'
SPLIT_SETS = ('train', 'validation', 'test')

PathLike = Union[str, Path]


class ArtifactFormatError(DataValidationError):
    """Malformed split file, index file or model container"""
    pass


@dataclass
class ExportOptions:
    """What to write next to the model"""
    write_normalizer: bool = True
    write_report: bool = True
    write_evaluation: bool = True


@dataclass
class ExportStats:
    """Files written by one exporter"""
    files_created: List[str] = field(default_factory=list)


@dataclass
class ModelBundle:
    network: Network
    normalizer: Normalizer
    codec: FeatureCodec
    config: NetworkConfig


# Split files

def format_split(sets: Mapping[str, Sequence[int]]) -> str:
    lines = []
    for name in SPLIT_SETS:
        indices = sorted(int(i) for i in sets.get(name, ()))
        lines.append(f"{name}: {','.join(str(i) for i in indices)}")
    return '\n'.join(lines) + '\n'


def parse_split(text: str, source: str = 'split file') -> Dict[str, List[int]]:
    sets: Dict[str, List[int]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        name, sep, values = line.partition(':')
        name = name.strip()
        if not sep or name not in SPLIT_SETS:
            raise ArtifactFormatError(f"{source} line {line_no}: expected 'train:', 'validation:' or 'test:'")
        if name in sets:
            raise ArtifactFormatError(f"{source} line {line_no}: duplicate '{name}' line")
        sets[name] = _parse_indices(values, f"{source} line {line_no}")

    missing = [name for name in SPLIT_SETS if name not in sets]
    if missing:
        raise ArtifactFormatError(f"{source}: missing {', '.join(missing)} line(s)")
    seen = [i for name in SPLIT_SETS for i in sets[name]]
    if len(seen) != len(set(seen)):
        raise ArtifactFormatError(f"{source}: a row appears in more than one set")
    return sets


def _parse_indices(values: str, where: str) -> List[int]:
    indices = []
    for token in values.replace('\n', ',').split(','):
        token = token.strip()
        if not token:
            continue
        try:
            index = int(token)
        except ValueError:
            raise ArtifactFormatError(f"{where}: '{token}' is not a row index")
        if index < 0:
            raise ArtifactFormatError(f"{where}: negative row index {index}")
        indices.append(index)
    return indices


def read_split_file(path: PathLike) -> Dict[str, List[int]]:
    path = Path(path)
    return parse_split(path.read_text(encoding='utf-8'), source=str(path))


def read_index_file(path: PathLike) -> List[int]:
    """Comma- or newline-separated corpus row indices (explicit test set / evaluation set)"""
    path = Path(path)
    indices = _parse_indices(path.read_text(encoding='utf-8'), str(path))
    if len(indices) != len(set(indices)):
        raise ArtifactFormatError(f"{path}: duplicate row index")
    return indices


# Model container

def model_to_text(network: Network, normalizer: Normalizer, codec: FeatureCodec,
                  config: NetworkConfig) -> str:
    document = {
        'network': config.to_dict(),
        'layers': [
            {
                'shape': list(w.shape),
                'activation': activation,
                'weights': [float(v) for v in w.ravel(order='C')],
                'bias': [float(v) for v in b],
            }
            for w, b, activation in zip(network.weights, network.biases, network.activations)
        ],
        'normalizer': normalizer_to_dict(normalizer),
        'codec': {
            'feature_names': list(codec.feature_names),
            'excipient_vocab': {category: list(names) for category, names in codec.excipient_vocab.items()},
        },
    }
    return f"{MODEL_MAGIC}\n{tomli_w.dumps(document)}"


def model_from_text(text: str, source: str = 'model file') -> ModelBundle:
    magic, _, body = text.partition('\n')
    if magic.strip() != MODEL_MAGIC:
        raise ArtifactFormatError(f"{source}: missing {MODEL_MAGIC} header")
    try:
        document = tomli.loads(body)
        layers = document['layers']
        weights = [
            np.asarray(layer['weights'], dtype=np.float64).reshape(tuple(layer['shape']))
            for layer in layers
        ]
        network = Network(
            weights=weights,
            biases=[np.asarray(layer['bias'], dtype=np.float64) for layer in layers],
            activations=[str(layer['activation']) for layer in layers],
        )
        echo = dict(document['network'])
        echo['hidden_layers'] = tuple(echo['hidden_layers'])
        config = NetworkConfig(**echo)
        normalizer = normalizer_from_dict(document['normalizer'])
        codec = FeatureCodec(
            excipient_vocab={k: tuple(v) for k, v in document['codec']['excipient_vocab'].items()},
            feature_names=tuple(document['codec']['feature_names']),
        )
    except (tomli.TOMLDecodeError, KeyError, TypeError, ValueError) as e:
        raise ArtifactFormatError(f"{source}: malformed model container ({e})")

    if network.input_dim != codec.dimension or tuple(normalizer.feature_names) != codec.feature_names:
        raise ArtifactFormatError(f"{source}: network, normalizer and codec disagree on the feature layout")
    return ModelBundle(network=network, normalizer=normalizer, codec=codec, config=config)


def load_model(path: PathLike) -> ModelBundle:
    path = Path(path)
    return model_from_text(path.read_text(encoding='utf-8'), source=str(path))


# Reports

def render_training_report(report: TrainingReport, results: Sequence[EvaluationResult],
                           set_sizes: Mapping[str, int]) -> str:
    """Human-readable summary; deterministic for a fixed seed"""
    config = report.config
    hidden = ', '.join(str(w) for w in config.hidden_layers) or '-'
    lines = [
        'ODT disintegration time model',
        '',
        f"preset:          {config.preset}",
        f"hidden layers:   [{hidden}]",
        f"epochs:          {config.epochs}",
        f"learning rate:   {config.learning_rate}",
        f"momentum:        {config.momentum}",
        f"seed:            {config.seed}",
        f"input features:  {config.input_dim}",
        '',
        'split: ' + ' / '.join(f"{name} {set_sizes.get(name, 0)}" for name in SPLIT_SETS),
        f"best epoch:      {report.best_epoch}",
        f"final loss:      {report.loss_trace[-1]:.6g}" if report.loss_trace else 'final loss:      -',
        '',
        f"{'set':<12}{'accuracy_PDT':>14}{'MAE (s)':>10}{'RMSE (s)':>10}{'n':>6}",
    ]
    for result in results:
        lines.append(
            f"{result.set_name:<12}{format_percentage(result.accuracy_pdt) + '%':>14}"
            f"{result.mae:>10.2f}{result.rmse:>10.2f}{result.n:>6}"
        )
    return '\n'.join(lines) + '\n'


class ArtifactExporter:
    """Writes pipeline artifacts and keeps track of what was created"""

    def __init__(self, options: Optional[ExportOptions] = None):
        self.options = options or ExportOptions()
        self.logger = logging.getLogger(__name__)
        self.stats = ExportStats()

    def _write(self, path: PathLike, content: str) -> str:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(content)
        if str(path) not in self.stats.files_created:
            self.stats.files_created.append(str(path))
        self.logger.debug(f"Wrote {path}")
        return str(path)

    def write_split(self, path: PathLike, sets: Mapping[str, Sequence[int]]) -> str:
        return self._write(path, format_split(sets))

    def save_model(self, path: PathLike, network: Network, normalizer: Normalizer,
                   codec: FeatureCodec, config: NetworkConfig) -> str:
        written = self._write(path, model_to_text(network, normalizer, codec, config))
        if self.options.write_normalizer:
            self.write_normalizer(Path(path).with_suffix('.normalizer.csv'), normalizer)
        return written

    def write_normalizer(self, path: PathLike, normalizer: Normalizer) -> str:
        return self._write(path, normalizer_to_text(normalizer))

    def write_report(self, path: PathLike, text: str) -> Optional[str]:
        if not self.options.write_report:
            return None
        return self._write(path, text)

    def write_evaluation(self, path: PathLike, results: Sequence[EvaluationResult]) -> Optional[str]:
        if not self.options.write_evaluation:
            return None
        return self.write_frame(path, evaluation_frame(results))

    def write_frame(self, path: PathLike, frame: pd.DataFrame) -> str:
        return self._write(path, frame.to_csv(index=False, lineterminator='\n'))

    def get_export_summary(self) -> Dict[str, object]:
        return {
            'files_created': len(self.stats.files_created),
            'file_list': list(self.stats.files_created),
        }
