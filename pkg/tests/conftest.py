"""Shared fixtures: the published (2,2,2) count table, printed pipeline matrices
and the ordering permutations needed to compare against them."""
from __future__ import annotations

import itertools
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from nsbell.correlators import key_from, key_rank
from nsbell.data import frequencies, load_counts
from nsbell.scenario import Scenario, encode_index

FIXTURES = Path(__file__).parent / "fixtures"
TABLE1_CSV = FIXTURES / "table1.csv"
TABLE1_GRID = FIXTURES / "table1_grid.txt"

# rows xy = 00, 01, 10, 11; columns ab = 00, 01, 10, 11
TABLE1 = {
    (0, 0): (3166, 1851, 2043, 1243520),
    (0, 1): (3637, 1338, 13544, 1230633),
    (1, 0): (3992, 13752, 1226, 1230686),
    (1, 1): (357, 17648, 16841, 1215766),
}

S222 = Scenario(2, 2)

# --- printed (2,2,2) pipeline matrices -------------------------------------

_H4 = [[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]]

PRINTED_T1 = [[_H4[r][c] if rb == cb else 0 for cb in range(4) for c in range(4)]
              for rb in range(4) for r in range(4)]

_q, _h = Fraction(1, 4), Fraction(1, 2)
PRINTED_T2 = [
    [_q, 0, 0, 0, _q, 0, 0, 0, _q, 0, 0, 0, _q, 0, 0, 0],
    [0, _h, 0, 0, 0, _h, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, _h, 0, 0, 0, _h, 0, 0],
    [0, 0, _h, 0, 0, 0, 0, 0, 0, 0, _h, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, _h, 0, 0, 0, 0, 0, 0, 0, _h, 0],
    [0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
]

_T3_INT = [
    [1, 1, 0, 1, 0, 1, 0, 0, 0],
    [1, 1, 0, -1, 0, -1, 0, 0, 0],
    [1, -1, 0, 1, 0, -1, 0, 0, 0],
    [1, -1, 0, -1, 0, 1, 0, 0, 0],
    [1, 1, 0, 0, 1, 0, 1, 0, 0],
    [1, 1, 0, 0, -1, 0, -1, 0, 0],
    [1, -1, 0, 0, 1, 0, -1, 0, 0],
    [1, -1, 0, 0, -1, 0, 1, 0, 0],
    [1, 0, 1, 1, 0, 0, 0, 1, 0],
    [1, 0, 1, -1, 0, 0, 0, -1, 0],
    [1, 0, -1, 1, 0, 0, 0, -1, 0],
    [1, 0, -1, -1, 0, 0, 0, 1, 0],
    [1, 0, 1, 0, 1, 0, 0, 0, 1],
    [1, 0, 1, 0, -1, 0, 0, 0, -1],
    [1, 0, -1, 0, 1, 0, 0, 0, -1],
    [1, 0, -1, 0, -1, 0, 0, 0, 1],
]
PRINTED_T3 = [[Fraction(v, 4) for v in row] for row in _T3_INT]

# correlator order used by the printed T2 rows / T3 columns
PRINTED_T2_ORDER = [((), ()), ((1,), (0,)), ((1,), (1,)), ((2,), (0,)), ((2,), (1,)),
                    ((1, 2), (0, 0)), ((1, 2), (0, 1)), ((1, 2), (1, 0)), ((1, 2), (1, 1))]

# --- printed constraint and UMC vectors (outcome-major columns a1 a2 x1 x2) --

PRINTED_NS_ROW = [1, 0, -1, 0, 0, 0, 0, 0, 1, 0, -1, 0, 0, 0, 0, 0]
PRINTED_NORM_ROW = [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]
PRINTED_UMC_ROWS = {
    ((1,), (0,)): [_h, _h, 0, 0, _h, _h, 0, 0, -_h, -_h, 0, 0, -_h, -_h, 0, 0],
    ((1,), (1,)): [0, 0, _h, _h, 0, 0, _h, _h, 0, 0, -_h, -_h, 0, 0, -_h, -_h],
    ((2,), (0,)): [_h, 0, _h, 0, -_h, 0, -_h, 0, _h, 0, _h, 0, -_h, 0, -_h, 0],
    ((2,), (1,)): [0, _h, 0, _h, 0, -_h, 0, -_h, 0, _h, 0, _h, 0, -_h, 0, -_h],
    ((1, 2), (0, 0)): [1, 0, 0, 0, -1, 0, 0, 0, -1, 0, 0, 0, 1, 0, 0, 0],
    ((1, 2), (0, 1)): [0, 1, 0, 0, 0, -1, 0, 0, 0, -1, 0, 0, 0, 1, 0, 0],
    ((1, 2), (1, 0)): [0, 0, 1, 0, 0, 0, -1, 0, 0, 0, -1, 0, 0, 0, 1, 0],
    ((1, 2), (1, 1)): [0, 0, 0, 1, 0, 0, 0, -1, 0, 0, 0, -1, 0, 0, 0, 1],
}


def printed_t2_permutation(scenario: Scenario = S222) -> list[int]:
    """Library correlator-row index for each position of the printed t2 order."""
    return [key_rank(scenario, key_from(I, x_I, scenario.n)) for I, x_I in PRINTED_T2_ORDER]


def outcome_major_permutation(scenario: Scenario = S222) -> list[int]:
    """Library flat index for each outcome-major column (a lex, then x lex)."""
    return [encode_index(scenario, a, x)
            for a in itertools.product((0, 1), repeat=scenario.n)
            for x in itertools.product(range(scenario.m), repeat=scenario.n)]


def as_fractions(M) -> list[list[Fraction]]:
    return [[Fraction(v) for v in row] for row in np.asarray(M, dtype=object).tolist()]


@pytest.fixture(scope="session")
def table1():
    with open(TABLE1_CSV, newline="") as fh:
        return load_counts(fh, S222)


@pytest.fixture(scope="session")
def table1_freq(table1):
    return frequencies(table1)


def random_weakly_signalling(scenario: Scenario, rng: np.random.Generator, eps: float = 1e-3) -> np.ndarray:
    """A local behaviour with small independent per-block noise (renormalised)."""
    from nsbell.scenario import random_local_behavior

    p = 0.9 * random_local_behavior(scenario, rng).entries + 0.1 / scenario.n_outcomes
    p = p + eps * rng.standard_normal(scenario.d)
    p = np.abs(p).reshape(scenario.n_settings, -1)
    return (p / p.sum(axis=1, keepdims=True)).ravel()


# --- acceptance reporting --------------------------------------------------

_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion and print it."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
