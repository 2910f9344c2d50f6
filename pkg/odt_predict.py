#!/usr/bin/env python3
"""
ODT Disintegration Time Prediction - command line entry point.

Subcommands: ingest, split, train, evaluate, predict, codec dump, experiment.
Exit codes: 0 success, 1 usage / configuration / IO error, 2 data validation
error, 3 numerical divergence during training.

    Gotchas:
     - Global flags (--config, --debug, --log-dir, -q) go before the subcommand.
     - CLI paths resolve against the working directory, config file paths
       against the config file's directory.
"""

import argparse
import logging
import sys
from datetime import datetime
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from colorama import Fore, Style

from artifact_exporter import (
    ArtifactExporter, load_model, read_index_file, read_split_file, render_training_report,
)
from config_manager import PATH_KEYS, PRESETS, STRATEGIES, ConfigError, ConfigManager, RunConfig
from feature_encoding import EncodedDataset, build_codec, encode_dataset, encode_records
from formulation_data import Corpus, DataValidationError, api_groups, dose_outliers, labeled_records, load_corpus
from mdfis_splitter import SplitConfig, SplitConfigError, SplitResult, row_groups, split
from neural_network import DivergenceError, LabeledSet, NetworkConfig, init_network, predict_batch, train
from pdt_metrics import EvaluationResult, evaluate, format_percentage


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3

LOG_FORMAT = '%(asctime)s,%(msecs)03d %(levelname)-8s [%(filename)s:%(lineno)d] %(message)s'
LOG_DATEFMT = '%Y-%m-%d:%H:%M:%S'


class OdtArgumentParser(argparse.ArgumentParser):
    """argparse reports usage errors with exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def mark(ok: Optional[bool]) -> str:
    """✓ / ✗ / ⚠, coloured when stderr is a terminal"""
    symbol, colour = {True: ('✓', Fore.GREEN), False: ('✗', Fore.RED), None: ('⚠', Fore.YELLOW)}[ok]
    if sys.stderr.isatty():
        return f"{colour}{symbol}{Style.RESET_ALL}"
    return symbol


class OdtPipelineManager:
    """Runs one pipeline command from parsed arguments and the run configuration"""

    def __init__(self, args):
        self.args = args
        self.config_manager = ConfigManager(args.config)
        config = self.config_manager.load_config()
        config = self.config_manager.apply_overrides(config, self._cli_overrides(args))
        if getattr(args, 'debug', False):
            config.log_level = 'DEBUG'
        self.config: RunConfig = config
        self.logger = self._setup_logging()
        self.config_manager.validate_config(self.config, need_inputs=args.command != 'predict')
        self.exporter = ArtifactExporter()
        self.progress = not getattr(args, 'quiet', False)

    @staticmethod
    def _cli_overrides(args) -> Dict[str, Any]:
        overrides = {}
        for key in ('formulations', 'apis', 'split_file', 'model_file', 'report_dir', 'log_dir', 'test_indices',
                    'seed', 'strategy', 'n_validation', 'n_test', 'small_group_threshold', 'n_initial',
                    'preset', 'epochs', 'learning_rate', 'momentum', 'hidden_layers', 'log_every'):
            value = getattr(args, key, None)
            if value is not None and key in PATH_KEYS:
                value = Path(value).resolve()
            overrides[key] = value
        return overrides

    def _setup_logging(self) -> logging.Logger:
        """Console handler always; a dated log file only when a log directory is configured"""
        root = logging.getLogger()
        for handler in list(root.handlers):
            if getattr(handler, '_odt_handler', False):
                root.removeHandler(handler)
                handler.close()
        root.setLevel(getattr(logging, self.config.log_level))
        formatter = logging.Formatter(LOG_FORMAT, LOG_DATEFMT)

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(logging.Formatter('%(levelname)-8s %(message)s'))
        console_handler._odt_handler = True
        root.addHandler(console_handler)

        logger = logging.getLogger('odt_predict')
        log_dir = self.config.paths.log_dir
        if log_dir is not None:
            log_dir.mkdir(parents=True, exist_ok=True)
            log_file = log_dir / f"odt_predict_{datetime.now().strftime('%Y%m%d')}.log"
            file_handler = logging.FileHandler(log_file, mode='a', encoding='utf-8')
            file_handler.setFormatter(formatter)
            file_handler._odt_handler = True
            root.addHandler(file_handler)
            logger.debug(f"Logging initialized - {log_file}")
        return logger

    # shared steps

    def _load_corpus(self) -> Corpus:
        paths = self.config.paths
        return load_corpus(paths.formulations, paths.apis)

    def _split_config(self, dataset: EncodedDataset) -> SplitConfig:
        settings = self.config.split
        test_rows = None
        if self.config.paths.test_indices is not None:
            corpus_indices = read_index_file(self.config.paths.test_indices)
            position = {corpus_index: row for row, corpus_index in enumerate(dataset.record_indices)}
            unknown = [i for i in corpus_indices if i not in position]
            if unknown:
                raise SplitConfigError(f"test indices {unknown} are not labeled corpus rows")
            test_rows = tuple(position[i] for i in corpus_indices)
        return SplitConfig(
            n_validation=settings.n_validation,
            n_test=settings.n_test,
            small_group_threshold=settings.small_group_threshold,
            n_initial=settings.n_initial,
            seed=self.config.seed,
            test_indices=test_rows,
            strategy=settings.strategy,
        )

    def _compute_split(self, corpus: Corpus) -> Tuple[EncodedDataset, SplitResult]:
        # distances use features scaled over every labeled row
        geometry = encode_dataset(corpus, build_codec(corpus))
        result = split(geometry, row_groups(corpus, geometry.record_indices), self._split_config(geometry))
        return geometry, result

    def _read_split(self, corpus: Corpus) -> SplitResult:
        split_path = self.config.paths.split_file
        if not split_path.exists():
            raise ConfigError(f"Split file not found: {split_path} (run 'split' first)")
        sets = read_split_file(split_path)
        return SplitResult.from_corpus_indices(sets, labeled_records(corpus))

    def _network_config(self, input_dim: int) -> NetworkConfig:
        settings = self.config.network
        return NetworkConfig.from_preset(
            settings.preset, input_dim, seed=self.config.seed, epochs=settings.epochs,
            learning_rate=settings.learning_rate, momentum=settings.momentum,
            hidden_layers=settings.hidden_layers,
        )

    def _train_and_score(self, corpus: Corpus, result: SplitResult,
                         net_config: NetworkConfig) -> Tuple[Any, Any, EncodedDataset, List[EvaluationResult]]:
        dataset = encode_dataset(corpus, build_codec(corpus), fit_rows=result.train)
        self.logger.info(
            f"Training {net_config.preset} {list(net_config.hidden_layers)} for {net_config.epochs} epochs "
            f"(seed {net_config.seed})"
        )
        network, report = train(
            init_network(net_config),
            LabeledSet.from_rows(dataset, result.train),
            LabeledSet.from_rows(dataset, result.validation),
            net_config,
            progress=self.progress,
            log_every=self.config.network.log_every,
        )
        results = self._score_sets(network, dataset, result)
        return network, report, dataset, results

    @staticmethod
    def _score_sets(network, dataset: EncodedDataset, result: SplitResult) -> List[EvaluationResult]:
        predictor = partial(predict_batch, network, dataset.normalizer)
        results = []
        for name, rows in (('train', result.train), ('validation', result.validation), ('test', result.test)):
            if not rows:
                continue
            rows = list(rows)
            results.append(evaluate(
                predictor, dataset.raw_features[rows], dataset.labels_sec[rows],
                set_name=name, row_indices=[dataset.record_indices[r] for r in rows],
            ))
        return results

    # commands

    def run_ingest(self) -> int:
        paths = self.config.paths
        if not Path(paths.formulations).read_text(encoding='utf-8').strip():
            self.logger.warning(f"{mark(None)} {paths.formulations} is empty")
            print("records: 0")
            return EXIT_OK

        corpus = self._load_corpus()
        if len(corpus) == 0:
            self.logger.warning(f"{mark(None)} {paths.formulations} holds no formulation rows")
            print("records: 0")
            return EXIT_OK
        groups = api_groups(corpus)
        lines = [
            f"records: {len(corpus)}",
            f"labeled: {len(labeled_records(corpus))}",
            f"api groups: {len(groups)}",
        ]
        lines.extend(f"  {name}: {len(rows)}" for name, rows in groups.items())
        lines.append('excipient vocabulary:')
        lines.extend(f"  {category}: {len(names)}" for category, names in corpus.excipient_vocab.items())
        print('\n'.join(lines))

        if getattr(self.args, 'strict', False):
            flagged = dose_outliers(corpus)
            self.logger.info(f"{mark(not flagged)} Strict dose check: {len(flagged)} suspicious dose(s)")
        self.logger.info(f"{mark(True)} Parsed {paths.formulations}")
        return EXIT_OK

    def run_split(self) -> int:
        corpus = self._load_corpus()
        geometry, result = self._compute_split(corpus)
        path = self.exporter.write_split(self.config.paths.split_file,
                                         result.to_corpus_indices(geometry.record_indices))
        print(f"train: {len(result.train)} validation: {len(result.validation)} test: {len(result.test)}")
        self.logger.info(f"{mark(True)} Split written to {path}")
        return EXIT_OK

    def run_train(self) -> int:
        corpus = self._load_corpus()
        result = self._read_split(corpus)
        codec = build_codec(corpus)
        net_config = self._network_config(codec.dimension)

        network, report, dataset, results = self._train_and_score(corpus, result, net_config)
        paths = self.config.paths
        self.exporter.save_model(paths.model_file, network, dataset.normalizer, dataset.codec, net_config)
        text = render_training_report(
            report, results,
            {'train': len(result.train), 'validation': len(result.validation), 'test': len(result.test)},
        )
        self.exporter.write_report(paths.report_dir / 'training_report.txt', text)
        print(text, end='')
        self.logger.info(f"{mark(True)} Model written to {paths.model_file}")
        return EXIT_OK

    def run_evaluate(self) -> int:
        bundle = load_model(self.config.paths.model_file)
        corpus = self._load_corpus()
        bundle.codec.check_compatible(build_codec(corpus))

        if getattr(self.args, 'indices', None):
            sets = {'selected': read_index_file(self.args.indices)}
        else:
            sets = read_split_file(self.config.paths.split_file)
            sets = {name: sets[name] for name in self.args.sets}
        if not any(sets.values()):
            raise DataValidationError("nothing to evaluate: every selected set is empty")

        labeled = set(labeled_records(corpus))
        predictor = partial(predict_batch, bundle.network, bundle.normalizer)
        results = []
        for name, indices in sets.items():
            if not indices:
                self.logger.warning(f"{mark(None)} {name} set is empty; skipped")
                continue
            unlabeled = [i for i in indices if i not in labeled]
            if unlabeled:
                raise DataValidationError(f"{name} set references unlabeled or missing rows {unlabeled}")
            records = [corpus.records[i] for i in indices]
            results.append(evaluate(
                predictor, encode_records(bundle.codec, records),
                [r.disintegration_time_sec for r in records], set_name=name, row_indices=indices,
            ))

        out = Path(self.args.out) if getattr(self.args, 'out', None) else self.config.paths.report_dir / 'evaluation.csv'
        self.exporter.write_evaluation(out, results)
        for result in results:
            print(result.summary())
        self.logger.info(f"{mark(True)} Evaluation written to {out}")
        return EXIT_OK

    def run_predict(self) -> int:
        bundle = load_model(self.config.paths.model_file)
        corpus = load_corpus(self.args.input, self.config.paths.apis, require_label=False)
        if len(corpus) == 0:
            raise DataValidationError(f"{self.args.input} holds no formulation rows")
        predictions = predict_batch(bundle.network, bundle.normalizer, encode_records(bundle.codec, corpus.records))
        frame = pd.DataFrame({
            'row': np.arange(len(corpus)),
            'api_name': [record.api.name for record in corpus.records],
            'prediction_sec': np.round(predictions, 2),
        })
        print(frame.to_csv(index=False, lineterminator='\n'), end='')
        return EXIT_OK

    def run_codec_dump(self) -> int:
        if getattr(self.args, 'from_model', None):
            codec = load_model(self.args.from_model).codec
        else:
            codec = build_codec(self._load_corpus())
        print('index,feature')
        for index, name in enumerate(codec.feature_names):
            print(f"{index},{name}")
        return EXIT_OK

    def run_experiment(self) -> int:
        """ANN vs DNN over several network seeds on one split, medians per preset"""
        corpus = self._load_corpus()
        if getattr(self.args, 'use_split', False):
            result = self._read_split(corpus)
        else:
            geometry, result = self._compute_split(corpus)
            self.exporter.write_split(self.config.paths.report_dir / 'experiment_split.txt',
                                      result.to_corpus_indices(geometry.record_indices))

        seeds = self.args.seeds or [self.config.seed + i for i in range(5)]
        dimension = build_codec(corpus).dimension
        settings = self.config.network
        rows = []
        for preset in self.args.presets:
            for seed in seeds:
                net_config = NetworkConfig.from_preset(
                    preset, dimension, seed=seed, epochs=self.args.epochs,
                    learning_rate=settings.learning_rate, momentum=settings.momentum,
                )
                _, report, _, results = self._train_and_score(corpus, result, net_config)
                row = {'preset': preset, 'seed': seed, 'best_epoch': report.best_epoch}
                row.update({r.set_name: r.accuracy_pdt for r in results})
                rows.append(row)

        frame = pd.DataFrame(rows, columns=['preset', 'seed', 'best_epoch', 'train', 'validation', 'test'])
        medians = frame.groupby('preset', sort=False)[['train', 'validation', 'test']].median()
        lines = [f"{'model':<8}{'training':>10}{'validation':>12}{'testing':>10}"]
        for preset, values in medians.iterrows():
            lines.append(
                f"{preset.upper():<8}{format_percentage(values['train']):>10}"
                f"{format_percentage(values['validation']):>12}{format_percentage(values['test']):>10}"
            )
        summary = '\n'.join(lines) + '\n'

        report_dir = self.config.paths.report_dir
        self.exporter.write_frame(report_dir / 'experiment.csv', frame)
        self.exporter.write_report(report_dir / 'experiment_summary.txt', summary)
        print(summary, end='')
        self.logger.info(f"{mark(True)} Experiment over {len(seeds)} seed(s) written to {report_dir}")
        return EXIT_OK

    def run(self) -> int:
        handlers = {
            'ingest': self.run_ingest,
            'split': self.run_split,
            'train': self.run_train,
            'evaluate': self.run_evaluate,
            'predict': self.run_predict,
            'codec': self.run_codec_dump,
            'experiment': self.run_experiment,
        }
        return handlers[self.args.command]()


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--formulations', type=Path, help='Formulation CSV (default: bundled corpus)')
    parser.add_argument('--apis', type=Path, help='API descriptor CSV (default: bundled)')


def _add_split_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--strategy', choices=STRATEGIES, help='Splitting strategy')
    parser.add_argument('--n-validation', type=int, help='Validation set size')
    parser.add_argument('--n-test', type=int, help='Test set size')
    parser.add_argument('--threshold', dest='small_group_threshold', type=int,
                        help='API groups smaller than this never supply validation rows')
    parser.add_argument('--n-initial', type=int, help='Random candidates for the initial row')
    parser.add_argument('--test-indices', type=Path, help='File of corpus rows forming the test set')


def _add_network_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--preset', choices=PRESETS, help='Network preset')
    parser.add_argument('--epochs', type=int, help='Override the preset epoch count')
    parser.add_argument('--lr', dest='learning_rate', type=float, help='Learning rate')
    parser.add_argument('--momentum', type=float, help='Momentum')
    parser.add_argument('--hidden-layers', type=int, nargs='*', help='Hidden layer widths (custom topology)')
    parser.add_argument('--log-every', type=int, help='Log training progress every N epochs')


def get_args(argv: Optional[Sequence[str]] = None):
    """Parse command line arguments"""
    parser = OdtArgumentParser(description="Predict orally disintegrating tablet disintegration times.")
    parser.add_argument('--config', type=str, default='config.toml', help='Configuration file path')
    parser.add_argument('--log-dir', type=Path, help='Log directory (file logging is off without it)')
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    parser.add_argument('-q', '--quiet', action='store_true', help='Disable progress bars')

    subparsers = parser.add_subparsers(dest='command', required=True, parser_class=OdtArgumentParser)

    ingest = subparsers.add_parser('ingest', help='Validate and summarize a corpus')
    _add_data_args(ingest)
    ingest.add_argument('--strict', action='store_true', help='Flag doses far above their API group median')

    split_p = subparsers.add_parser('split', help='Write a train/validation/test split file')
    _add_data_args(split_p)
    _add_split_args(split_p)
    split_p.add_argument('--seed', type=int, help='Random seed')
    split_p.add_argument('--out', dest='split_file', type=Path, help='Split file to write')

    train_p = subparsers.add_parser('train', help='Train a network on a split')
    _add_data_args(train_p)
    _add_network_args(train_p)
    train_p.add_argument('--seed', type=int, help='Network initialization seed')
    train_p.add_argument('--split', dest='split_file', type=Path, help='Split file to train on')
    train_p.add_argument('--out', dest='model_file', type=Path, help='Model file to write')
    train_p.add_argument('--report-dir', type=Path, help='Directory for the training report')

    evaluate_p = subparsers.add_parser('evaluate', help='Score a model on split sets')
    _add_data_args(evaluate_p)
    evaluate_p.add_argument('--model', dest='model_file', type=Path, help='Model file')
    evaluate_p.add_argument('--split', dest='split_file', type=Path, help='Split file')
    evaluate_p.add_argument('--sets', nargs='+', choices=('train', 'validation', 'test'),
                            default=['train', 'validation', 'test'], help='Sets to evaluate')
    evaluate_p.add_argument('--indices', type=Path, help='Evaluate these corpus rows instead of split sets')
    evaluate_p.add_argument('--out', type=Path, help='Evaluation CSV (default: <report_dir>/evaluation.csv)')
    evaluate_p.add_argument('--report-dir', type=Path, help='Report directory')

    predict_p = subparsers.add_parser('predict', help='Predict disintegration times for formulation rows')
    predict_p.add_argument('input', type=Path, help='Formulation CSV; the label column may be omitted')
    predict_p.add_argument('--model', dest='model_file', type=Path, help='Model file')
    predict_p.add_argument('--apis', type=Path, help='API descriptor CSV (default: bundled)')

    codec_p = subparsers.add_parser('codec', help='Feature codec utilities')
    codec_sub = codec_p.add_subparsers(dest='codec_command', required=True, parser_class=OdtArgumentParser)
    dump = codec_sub.add_parser('dump', help='List the feature vector layout')
    _add_data_args(dump)
    dump.add_argument('--model', dest='from_model', type=Path, help='Dump the codec stored in a model file')

    experiment = subparsers.add_parser('experiment', help='ANN vs DNN comparison over several seeds')
    _add_data_args(experiment)
    _add_split_args(experiment)
    experiment.add_argument('--seed', type=int, help='Split seed (network seeds default to seed..seed+4)')
    experiment.add_argument('--seeds', type=int, nargs='+', help='Network seeds')
    experiment.add_argument('--presets', nargs='+', choices=('ann', 'dnn'), default=['ann', 'dnn'])
    experiment.add_argument('--epochs', type=int, help='Override the epoch count of every preset')
    experiment.add_argument('--lr', dest='learning_rate', type=float, help='Learning rate')
    experiment.add_argument('--momentum', type=float, help='Momentum')
    experiment.add_argument('--split', dest='split_file', type=Path, help='Use this split file')
    experiment.add_argument('--report-dir', type=Path, help='Directory for experiment outputs')

    args = parser.parse_args(argv)
    args.use_split = args.command == 'experiment' and args.split_file is not None
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    try:
        args = get_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    logger = logging.getLogger('odt_predict')
    try:
        manager = OdtPipelineManager(args)
        return manager.run()
    except KeyboardInterrupt:
        logger.error(f"{mark(False)} Operation cancelled by user")
        return EXIT_USAGE
    except DivergenceError as e:
        logger.error(f"{mark(False)} {e}", exc_info=args.debug)
        return EXIT_DIVERGENCE
    except DataValidationError as e:
        logger.error(f"{mark(False)} {e}", exc_info=args.debug)
        return EXIT_DATA
    except (ConfigError, SplitConfigError, ValueError, OSError) as e:
        logger.error(f"{mark(False)} {e}", exc_info=args.debug)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
