#!/usr/bin/env python3
"""
Formulation Data Module
Parses, validates and indexes ODT formulation records from the bundled
corpus and from user-supplied CSV files.

    Gotchas:
     - The bundled corpus mixes explicit 0 and blank cells for absent excipients, so a
       blank dose next to a named excipient reads as 0 mg.
     - Blank hardness / friability / thickness / punch / label cells are
       "absent" (None), never 0.
"""

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd


DATA_DIR = Path(__file__).resolve().parent / 'data'
BUNDLED_FORMULATIONS = DATA_DIR / 'odt_table1.csv'
BUNDLED_APIS = DATA_DIR / 'apis.csv'

EXCIPIENT_CATEGORIES = ('Filler', 'Binder', 'Disintegrant', 'Lubricant', 'Solubilizer')

# (slot column prefix, category) in column order: 2 fillers, 1 binder,
# 2 disintegrants, 2 lubricants, 1 solubilizer
SLOT_LAYOUT: Tuple[Tuple[str, str], ...] = (
    ('filler1', 'Filler'),
    ('filler2', 'Filler'),
    ('binder', 'Binder'),
    ('disint1', 'Disintegrant'),
    ('disint2', 'Disintegrant'),
    ('lubricant1', 'Lubricant'),
    ('lubricant2', 'Lubricant'),
    ('solubilizer', 'Solubilizer'),
)

MANUFACTURE_COLUMNS = ('hardness_n', 'friability_pct', 'thickness_mm', 'punch_mm')
LABEL_COLUMN = 'disintegration_time_sec'

FORMULATION_COLUMNS: Tuple[str, ...] = (
    ('api_name', 'api_dose_mg')
    + tuple(col for slot, _ in SLOT_LAYOUT for col in (f'{slot}_name', f'{slot}_mg'))
    + MANUFACTURE_COLUMNS
    + (LABEL_COLUMN,)
)

DESCRIPTOR_FIELDS = (
    'molecular_weight', 'xlogp3', 'hbond_donors', 'hbond_acceptors',
    'rotatable_bonds', 'tpsa', 'heavy_atoms', 'complexity', 'logs',
)
COUNT_FIELDS = ('hbond_donors', 'hbond_acceptors', 'rotatable_bonds', 'heavy_atoms')
API_COLUMNS: Tuple[str, ...] = ('api_name',) + DESCRIPTOR_FIELDS


class DataValidationError(ValueError):
    """Base class for corpus, encoding and artifact validation failures"""
    pass


class CorpusParseError(DataValidationError):
    """Malformed CSV row or cell; carries the 1-based data row and column"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None,
                 source: str = 'formulations'):
        self.row = row
        self.column = column
        self.source = source
        location = source
        if row is not None:
            location += f" row {row}"
        if column is not None:
            location += f" column '{column}'"
        super().__init__(f"{location}: {message}")


class ApiResolutionError(DataValidationError):
    """Formulation references an API missing from the descriptor table"""
    pass


@dataclass(frozen=True)
class ApiDescriptor:
    """Nine molecular descriptors of an active ingredient"""
    name: str
    molecular_weight: float
    xlogp3: float
    hbond_donors: int
    hbond_acceptors: int
    rotatable_bonds: int
    tpsa: float
    heavy_atoms: int
    complexity: float
    logs: float

    def as_vector(self) -> Tuple[float, ...]:
        return tuple(float(getattr(self, name)) for name in DESCRIPTOR_FIELDS)


@dataclass(frozen=True)
class ExcipientEntry:
    """One coded excipient slot; dose 0 means coded but absent"""
    category: str
    name: str
    dose_mg: float
    slot: str


@dataclass(frozen=True)
class FormulationRecord:
    api: ApiDescriptor
    api_dose_mg: float
    excipients: Tuple[ExcipientEntry, ...] = ()
    hardness_n: Optional[float] = None
    friability_pct: Optional[float] = None
    thickness_mm: Optional[float] = None
    punch_mm: Optional[float] = None
    disintegration_time_sec: Optional[float] = None

    def excipient_in(self, slot: str) -> Optional[ExcipientEntry]:
        for entry in self.excipients:
            if entry.slot == slot:
                return entry
        return None

    @property
    def is_labeled(self) -> bool:
        return self.disintegration_time_sec is not None


@dataclass(frozen=True)
class Corpus:
    """Immutable, order-preserving collection of formulation records"""
    records: Tuple[FormulationRecord, ...]
    api_table: Mapping[str, ApiDescriptor]
    excipient_vocab: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class DoseWarning:
    """A dose flagged by the strict check; the data itself is never edited"""
    row: int
    column: str
    api_name: str
    dose_mg: float
    group_median_mg: float


logger = logging.getLogger(__name__)


def _read_frame(text: str, expected: Sequence[str], source: str,
                optional: Sequence[str] = ()) -> pd.DataFrame:
    """Read CSV text as strings, checking the header and per-row field counts"""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise CorpusParseError("missing header row", source=source)

    header = [col.strip() for col in lines[0].split(',')]
    accepted = [list(expected)]
    if optional:
        accepted.append([col for col in expected if col not in optional])
    if header not in accepted:
        raise CorpusParseError(
            f"unexpected header {header}; expected columns {list(expected)}", source=source
        )

    for row_no, line in enumerate(lines[1:], start=1):
        n_fields = len(line.split(','))
        if n_fields != len(header):
            raise CorpusParseError(
                f"expected {len(header)} fields, found {n_fields}", row=row_no, source=source
            )

    frame = pd.read_csv(
        io.StringIO('\n'.join(lines)), dtype=str, keep_default_na=False,
        na_filter=False, skipinitialspace=False,
    )
    for col in optional:
        if col not in frame.columns:
            frame[col] = ''
    return frame[list(expected)]


def _parse_number(cell: str, row: int, column: str, source: str) -> Optional[float]:
    cell = cell.strip()
    if cell == '':
        return None
    try:
        value = float(cell)
    except ValueError:
        raise CorpusParseError(f"non-numeric value '{cell}'", row=row, column=column, source=source)
    if not np.isfinite(value):
        raise CorpusParseError(f"non-finite value '{cell}'", row=row, column=column, source=source)
    return value


def parse_api_table(api_csv: str) -> Dict[str, ApiDescriptor]:
    """Parse the descriptor table into name -> ApiDescriptor"""
    frame = _read_frame(api_csv, API_COLUMNS, source='apis')
    table: Dict[str, ApiDescriptor] = {}

    for row_no, row in enumerate(frame.itertuples(index=False), start=1):
        cells = row._asdict()
        name = cells['api_name'].strip()
        if not name:
            raise CorpusParseError("empty API name", row=row_no, column='api_name', source='apis')
        if name in table:
            raise CorpusParseError(f"duplicate API '{name}'", row=row_no, column='api_name', source='apis')

        values = {}
        for col in DESCRIPTOR_FIELDS:
            value = _parse_number(cells[col], row_no, col, 'apis')
            if value is None:
                raise CorpusParseError("missing descriptor", row=row_no, column=col, source='apis')
            if col in COUNT_FIELDS:
                if value < 0 or not float(value).is_integer():
                    raise CorpusParseError(
                        f"expected a non-negative integer count, got {value}",
                        row=row_no, column=col, source='apis'
                    )
                value = int(value)
            values[col] = value

        if values['molecular_weight'] <= 0:
            raise CorpusParseError("molecular weight must be > 0", row=row_no,
                                   column='molecular_weight', source='apis')
        table[name] = ApiDescriptor(name=name, **values)

    logger.debug(f"Parsed {len(table)} API descriptors")
    return table


def _parse_excipients(cells: Dict[str, str], row_no: int) -> Tuple[ExcipientEntry, ...]:
    entries = []
    for slot, category in SLOT_LAYOUT:
        name = cells[f'{slot}_name'].strip()
        dose = _parse_number(cells[f'{slot}_mg'], row_no, f'{slot}_mg', 'formulations')
        if not name:
            if dose not in (None, 0.0):
                raise CorpusParseError(
                    f"dose {dose} given without an excipient name", row=row_no,
                    column=f'{slot}_name'
                )
            continue
        dose = 0.0 if dose is None else dose
        if dose < 0:
            raise CorpusParseError("dose must be >= 0", row=row_no, column=f'{slot}_mg')
        entries.append(ExcipientEntry(category=category, name=name, dose_mg=dose, slot=slot))
    return tuple(entries)


def _vocabulary(records: Sequence[FormulationRecord]) -> Dict[str, Tuple[str, ...]]:
    """Per-category excipient names in order of first appearance"""
    vocab: Dict[str, List[str]] = {category: [] for category in EXCIPIENT_CATEGORIES}
    for record in records:
        for entry in record.excipients:
            if entry.name not in vocab[entry.category]:
                vocab[entry.category].append(entry.name)
    return {category: tuple(names) for category, names in vocab.items()}


def parse_corpus(formulation_csv: str, api_csv: str, require_label: bool = True) -> Corpus:
    """Parse formulation and descriptor CSV text into a Corpus.

    One record per data row, in file order. When ``require_label`` is False
    the label column may be omitted from the header (prediction inputs).
    """
    api_table = parse_api_table(api_csv)
    frame = _read_frame(
        formulation_csv, FORMULATION_COLUMNS, source='formulations',
        optional=() if require_label else (LABEL_COLUMN,),
    )

    records = []
    for row_no, row in enumerate(frame.itertuples(index=False), start=1):
        cells = row._asdict()
        api_name = cells['api_name'].strip()
        if not api_name:
            raise CorpusParseError("empty API name", row=row_no, column='api_name')
        if api_name not in api_table:
            raise ApiResolutionError(f"formulations row {row_no}: unknown API '{api_name}'")

        api_dose = _parse_number(cells['api_dose_mg'], row_no, 'api_dose_mg', 'formulations')
        if api_dose is None or api_dose <= 0:
            raise CorpusParseError("API dose must be > 0", row=row_no, column='api_dose_mg')

        manufacture = {
            col: _parse_number(cells[col], row_no, col, 'formulations') for col in MANUFACTURE_COLUMNS
        }
        label = _parse_number(cells[LABEL_COLUMN], row_no, LABEL_COLUMN, 'formulations')
        if label is not None and label < 0:
            raise CorpusParseError("disintegration time must be >= 0", row=row_no, column=LABEL_COLUMN)

        records.append(FormulationRecord(
            api=api_table[api_name],
            api_dose_mg=api_dose,
            excipients=_parse_excipients(cells, row_no),
            disintegration_time_sec=label,
            **manufacture,
        ))

    corpus = Corpus(records=tuple(records), api_table=api_table, excipient_vocab=_vocabulary(records))
    logger.info(f"Parsed {len(records)} formulation records ({len(labeled_records(corpus))} labeled)")
    return corpus


def load_corpus(formulation_path: Path = BUNDLED_FORMULATIONS, api_path: Path = BUNDLED_APIS,
                require_label: bool = True) -> Corpus:
    """Read and parse corpus files (UTF-8)"""
    formulation_path, api_path = Path(formulation_path), Path(api_path)
    logger.debug(f"Loading corpus from {formulation_path} and {api_path}")
    return parse_corpus(
        formulation_path.read_text(encoding='utf-8'),
        api_path.read_text(encoding='utf-8'),
        require_label=require_label,
    )


def format_number(value: Optional[float]) -> str:
    """Shortest text that parses back to the same float; '' for absent"""
    if value is None:
        return ''
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def serialize_corpus(corpus: Corpus) -> Tuple[str, str]:
    """Inverse of parse_corpus: (formulation_csv, api_csv) text"""
    rows = []
    for record in corpus.records:
        row = {'api_name': record.api.name, 'api_dose_mg': format_number(record.api_dose_mg)}
        for slot, _ in SLOT_LAYOUT:
            entry = record.excipient_in(slot)
            row[f'{slot}_name'] = entry.name if entry else ''
            row[f'{slot}_mg'] = format_number(entry.dose_mg) if entry else ''
        for col in MANUFACTURE_COLUMNS + (LABEL_COLUMN,):
            row[col] = format_number(getattr(record, col))
        rows.append(row)

    formulations = pd.DataFrame(rows, columns=list(FORMULATION_COLUMNS))
    apis = pd.DataFrame(
        [
            {'api_name': api.name, **{col: format_number(getattr(api, col)) for col in DESCRIPTOR_FIELDS}}
            for api in corpus.api_table.values()
        ],
        columns=list(API_COLUMNS),
    )
    return (
        formulations.to_csv(index=False, lineterminator='\n'),
        apis.to_csv(index=False, lineterminator='\n'),
    )


def labeled_records(corpus: Corpus) -> List[int]:
    """Indices of records carrying a disintegration-time label, in order"""
    return [index for index, record in enumerate(corpus.records) if record.is_labeled]


def api_groups(corpus: Corpus) -> Dict[str, List[int]]:
    """Partition of all record indices keyed by API name (first-appearance order)"""
    groups: Dict[str, List[int]] = {}
    for index, record in enumerate(corpus.records):
        groups.setdefault(record.api.name, []).append(index)
    return groups


def dose_outliers(corpus: Corpus, factor: float = 10.0) -> List[DoseWarning]:
    """Doses above ``factor`` x the within-API median of nonzero doses in the same column"""
    rows = []
    for index, record in enumerate(corpus.records):
        rows.append({'row': index, 'api_name': record.api.name,
                     'column': 'api_dose_mg', 'dose': record.api_dose_mg})
        for entry in record.excipients:
            rows.append({'row': index, 'api_name': record.api.name,
                         'column': f'{entry.slot}_mg', 'dose': entry.dose_mg})
    if not rows:
        return []

    doses = pd.DataFrame(rows)
    nonzero = doses[doses['dose'] > 0]
    medians = nonzero.groupby(['api_name', 'column'])['dose'].median().rename('median')
    doses = doses.join(medians, on=['api_name', 'column'])
    flagged = doses[(doses['dose'] > 0) & (doses['dose'] > factor * doses['median'])]

    warnings = [
        DoseWarning(row=int(item.row), column=item.column, api_name=item.api_name,
                    dose_mg=float(item.dose), group_median_mg=float(item.median))
        for item in flagged.itertuples(index=False)
    ]
    for warning in warnings:
        logger.warning(
            f"⚠ Row {warning.row} ({warning.api_name}) {warning.column} = {warning.dose_mg} mg "
            f"exceeds {factor:g}x the group median {warning.group_median_mg} mg"
        )
    return warnings
