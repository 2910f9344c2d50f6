"""Shared fixtures: bundled corpus, small synthetic corpora, finite differences."""

import numpy as np
import pytest

from feature_encoding import build_codec, encode_dataset
from formulation_data import API_COLUMNS, FORMULATION_COLUMNS, load_corpus, parse_corpus


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproduction tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


API_CSV = "\n".join([
    ",".join(API_COLUMNS),
    "Alpha,200,1.5,1,3,2,50,15,300,-2.5",
    "Beta,350,3.2,2,5,4,90,25,600,-4.1",
    "Gamma,150,0.2,0,2,1,30,11,150,-1.0",
]) + "\n"


def formulation_row(api="Alpha", dose=10, filler1=("Mannitol", 100), filler2=("", ""), binder=("PVP", 20),
                    disint1=("CC-Na", 15), disint2=("", ""), lubricant1=("Mg stearate", 2),
                    lubricant2=("", ""), solubilizer=("", ""), hardness=40, friability=0.5,
                    thickness=3.5, punch=8, label=30):
    cells = [api, dose]
    for name, mg in (filler1, filler2, binder, disint1, disint2, lubricant1, lubricant2, solubilizer):
        cells.extend([name, mg])
    cells.extend([hardness, friability, thickness, punch, label])
    return ",".join("" if c is None else str(c) for c in cells)


def formulation_csv(rows, header=FORMULATION_COLUMNS):
    return "\n".join([",".join(header), *rows]) + "\n"


@pytest.fixture(scope="session")
def bundled_corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def bundled_codec(bundled_corpus):
    return build_codec(bundled_corpus)


@pytest.fixture(scope="session")
def bundled_geometry(bundled_corpus, bundled_codec):
    return encode_dataset(bundled_corpus, bundled_codec)


@pytest.fixture
def small_corpus():
    rows = [
        formulation_row("Alpha", 10, label=20),
        formulation_row("Alpha", 12, filler1=("MCC", 90), label=35),
        formulation_row("Alpha", 10, hardness=55, label=48),
        formulation_row("Beta", 25, disint1=("PVPP", 12), label=15),
        formulation_row("Beta", 25, lubricant2=("Aerosil", 1), label=62),
        formulation_row("Beta", 20, punch=None, label=70),
        formulation_row("Gamma", 5, solubilizer=("SDS", 3), thickness=None, label=None),
        formulation_row("Gamma", 5, binder=("HPMC", 18), label=9),
    ]
    return parse_corpus(formulation_csv(rows), API_CSV)


def numerical_diff(f, x, index, h=1e-5):
    """Central difference of scalar f with respect to x[index]; x is restored afterwards"""
    original = x[index]
    x[index] = original + h
    plus = f()
    x[index] = original - h
    minus = f()
    x[index] = original
    return (plus - minus) / (2 * h)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
