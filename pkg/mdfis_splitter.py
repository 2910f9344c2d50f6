#!/usr/bin/env python3
"""
MD-FIS Dataset Splitting Module
Improved maximum dissimilarity selection: small API group filter,
representative initial row, greedy dissimilarity selection with a pluggable
cost. Splits labeled rows into training / validation / testing sets.

All indices here live in the labeled-row space (0..N-1 of an EncodedDataset).
Ties are always broken by the lowest row index.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from formulation_data import Corpus


STRATEGIES = ('mdfis', 'maximin', 'random')

logger = logging.getLogger(__name__)


class SplitConfigError(ValueError):
    """Split settings inconsistent with the data"""
    pass


# A cost maps the candidate-to-selected distance matrix (n_candidates x
# n_selected) to one score per candidate; the highest score is picked.
SelectionCost = Callable[[np.ndarray], np.ndarray]


def maximin_cost(distances: np.ndarray) -> np.ndarray:
    """Classical maximin: a candidate's score is its distance to the nearest selected row"""
    if distances.shape[1] == 0:
        return np.full(distances.shape[0], np.inf)
    return distances.min(axis=1)


SELECTION_COSTS: Dict[str, SelectionCost] = {'maximin': maximin_cost}


def register_selection_cost(name: str, cost: SelectionCost) -> None:
    """Make an alternative cost available to maximin_select by name"""
    SELECTION_COSTS[name] = cost
    logger.debug(f"Registered selection cost '{name}'")


def _resolve_cost(cost: Union[str, SelectionCost]) -> SelectionCost:
    if callable(cost):
        return cost
    try:
        return SELECTION_COSTS[cost]
    except KeyError:
        raise SplitConfigError(f"unknown selection cost '{cost}'; known: {sorted(SELECTION_COSTS)}")


@dataclass(frozen=True)
class SplitConfig:
    """Split settings; test_indices, when given, are labeled-row indices"""
    n_validation: int = 20
    n_test: int = 20
    small_group_threshold: int = 3
    n_initial: int = 1
    seed: int = 0
    test_indices: Optional[Tuple[int, ...]] = None
    strategy: str = 'mdfis'
    cost: str = 'maximin'

    def validate(self, n_rows: int) -> None:
        n_test = len(self.test_indices) if self.test_indices is not None else self.n_test
        if self.n_validation < 0 or n_test < 0:
            raise SplitConfigError("set sizes must be non-negative")
        if self.n_validation + n_test >= n_rows:
            raise SplitConfigError(
                f"n_validation ({self.n_validation}) + n_test ({n_test}) must be smaller "
                f"than the {n_rows} eligible rows"
            )
        if self.small_group_threshold < 1:
            raise SplitConfigError("small_group_threshold must be >= 1")
        if self.n_initial < 1:
            raise SplitConfigError("n_initial must be >= 1")
        if self.strategy not in STRATEGIES:
            raise SplitConfigError(f"unknown strategy '{self.strategy}'; expected one of {STRATEGIES}")
        if self.test_indices is not None:
            bad = [i for i in self.test_indices if not 0 <= i < n_rows]
            if bad or len(set(self.test_indices)) != len(self.test_indices):
                raise SplitConfigError(f"test indices must be unique rows in 0..{n_rows - 1}")


@dataclass(frozen=True)
class SplitResult:
    train: Tuple[int, ...]
    validation: Tuple[int, ...]
    test: Tuple[int, ...]

    def check_partition(self, n_rows: int) -> None:
        sets = [set(self.train), set(self.validation), set(self.test)]
        if sum(len(s) for s in sets) != len(set().union(*sets)):
            raise AssertionError("split sets overlap")
        if set().union(*sets) != set(range(n_rows)):
            raise AssertionError("split sets do not cover every row")

    def to_corpus_indices(self, record_indices: Sequence[int]) -> Dict[str, List[int]]:
        return {
            name: sorted(record_indices[row] for row in rows)
            for name, rows in (('train', self.train), ('validation', self.validation), ('test', self.test))
        }

    @classmethod
    def from_corpus_indices(cls, sets: Mapping[str, Sequence[int]],
                            record_indices: Sequence[int]) -> 'SplitResult':
        position = {corpus_index: row for row, corpus_index in enumerate(record_indices)}
        try:
            return cls(**{
                name: tuple(sorted(position[i] for i in sets.get(name, ())))
                for name in ('train', 'validation', 'test')
            })
        except KeyError as e:
            raise SplitConfigError(f"split references corpus row {e} which is not a labeled record")


def row_groups(corpus: Corpus, record_indices: Sequence[int]) -> Dict[str, List[int]]:
    """API groups expressed in the labeled-row space"""
    groups: Dict[str, List[int]] = {}
    for row, corpus_index in enumerate(record_indices):
        groups.setdefault(corpus.records[corpus_index].api.name, []).append(row)
    return groups


def restrict_groups(groups: Mapping[str, Sequence[int]], rows: Sequence[int]) -> Dict[str, List[int]]:
    keep = set(rows)
    restricted = {name: [r for r in members if r in keep] for name, members in groups.items()}
    return {name: members for name, members in restricted.items() if members}


def small_group_filter(groups: Mapping[str, Sequence[int]], threshold: int,
                       n_validation: Optional[int] = None) -> Tuple[List[int], List[int]]:
    """Split rows into (eligible_pool, protected): groups smaller than threshold are protected"""
    eligible, protected = [], []
    for members in groups.values():
        (protected if len(members) < threshold else eligible).extend(members)
    eligible.sort()
    protected.sort()

    if n_validation is not None and len(eligible) < n_validation:
        raise SplitConfigError(
            f"only {len(eligible)} rows outside small API groups; cannot select {n_validation}"
        )
    return eligible, protected


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def pairwise_distances(features: np.ndarray, rows_a: Sequence[int], rows_b: Sequence[int]) -> np.ndarray:
    """Euclidean distances between two row subsets (len(rows_a) x len(rows_b))"""
    a = features[list(rows_a)]
    b = features[list(rows_b)]
    if len(rows_a) == 0 or len(rows_b) == 0:
        return np.zeros((len(rows_a), len(rows_b)))
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff ** 2, axis=2))


def _as_generator(seed: Union[int, np.random.Generator]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def select_initial(features: np.ndarray, pool: Sequence[int], n_initial: int,
                   seed: Union[int, np.random.Generator]) -> int:
    """Representative initial row.

    Draws ``n_initial`` random candidates from the pool and returns the one
    whose distance to its nearest other pool row is smallest.
    """
    pool = sorted(pool)
    if not pool:
        raise SplitConfigError("cannot select an initial row from an empty pool")
    rng = _as_generator(seed)
    n_candidates = min(n_initial, len(pool))
    candidates = sorted(int(c) for c in rng.choice(pool, size=n_candidates, replace=False))
    if len(pool) == 1:
        return pool[0]

    distances = pairwise_distances(features, candidates, pool)
    for i, candidate in enumerate(candidates):
        distances[i, pool.index(candidate)] = np.inf
    nearest = distances.min(axis=1)
    chosen = candidates[int(np.argmin(nearest))]
    logger.debug(f"Initial row {chosen} chosen from candidates {candidates}")
    return chosen


def maximin_select(features: np.ndarray, pool: Sequence[int], selected_init: Sequence[int], k: int,
                   cost: Union[str, SelectionCost] = 'maximin') -> List[int]:
    """Greedy dissimilarity selection of k rows from pool (excluding selected_init).

    Each step scores every remaining candidate against everything selected so
    far and takes the best; ties go to the lowest row index.
    """
    score = _resolve_cost(cost)
    selected = list(selected_init)
    candidates = sorted(set(pool) - set(selected))
    if k > len(candidates):
        raise SplitConfigError(f"cannot select {k} rows from a pool of {len(candidates)}")

    picked: List[int] = []
    distances = pairwise_distances(features, candidates, selected)
    for _ in range(k):
        scores = score(distances)
        best = int(np.argmax(scores))
        row = candidates.pop(best)
        picked.append(row)
        distances = np.delete(distances, best, axis=0)
        new_column = pairwise_distances(features, candidates, [row])
        distances = np.hstack([distances, new_column])
    return picked


def _random_split(n_rows: int, config: SplitConfig, rng: np.random.Generator) -> SplitResult:
    rows = np.arange(n_rows)
    if config.test_indices is not None:
        test = sorted(config.test_indices)
    else:
        test = sorted(int(r) for r in rng.choice(rows, size=config.n_test, replace=False))
    remainder = np.setdiff1d(rows, test)
    validation = sorted(int(r) for r in rng.choice(remainder, size=config.n_validation, replace=False))
    train = sorted(set(remainder.tolist()) - set(validation))
    return SplitResult(train=tuple(train), validation=tuple(validation), test=tuple(test))


def _select_block(features: np.ndarray, pool: Sequence[int], k: int, config: SplitConfig,
                  rng: np.random.Generator) -> List[int]:
    if k == 0:
        return []
    if config.strategy == 'maximin':
        init = int(rng.choice(sorted(pool)))
    else:
        init = select_initial(features, pool, config.n_initial, rng)
    return maximin_select(features, pool, [init], k, cost=config.cost)


def split(dataset, groups: Mapping[str, Sequence[int]], config: SplitConfig) -> SplitResult:
    """Partition the dataset's rows into train / validation / test.

    ``dataset`` is an EncodedDataset (or anything with a ``features`` matrix);
    ``groups`` maps API name -> labeled-row indices.
    """
    features = np.asarray(dataset.features if hasattr(dataset, 'features') else dataset, dtype=np.float64)
    n_rows = features.shape[0]
    config.validate(n_rows)
    rng = np.random.default_rng(config.seed)

    if config.strategy == 'random':
        result = _random_split(n_rows, config, rng)
        result.check_partition(n_rows)
        return result

    filtering = config.strategy == 'mdfis'
    threshold = config.small_group_threshold if filtering else 1
    all_rows = list(range(n_rows))

    if config.test_indices is not None:
        test = sorted(config.test_indices)
    else:
        test_pool, _ = small_group_filter(groups, threshold, config.n_test)
        test = sorted(_select_block(features, test_pool, config.n_test, config, rng))

    remainder = sorted(set(all_rows) - set(test))
    pool, protected = small_group_filter(restrict_groups(groups, remainder), threshold, config.n_validation)
    if len(pool) <= config.n_validation and config.n_validation > 0:
        raise SplitConfigError(
            f"eligible pool of {len(pool)} rows leaves no initial row for {config.n_validation} validation rows"
        )
    validation = sorted(_select_block(features, pool, config.n_validation, config, rng))
    train = sorted(set(remainder) - set(validation))

    result = SplitResult(train=tuple(train), validation=tuple(validation), test=tuple(test))
    result.check_partition(n_rows)
    logger.info(
        f"{config.strategy} split: {len(train)} train / {len(validation)} validation / {len(test)} test "
        f"({len(protected)} protected small-group rows)"
    )
    return result
