"""Parity correlators, uniformly-averaged marginal correlators (UMCs) and their inverse.

Correlator keys use an "absent party" encoding: a key is a length-n tuple whose
i-th entry is -1 when party i is outside the subset and its setting otherwise.
Keys are ordered lexicographically with absent < 0 < 1 < ..., which gives the
(m+1)^n layout used for T2 rows and T3 columns.

Settingwise correlators C^I_x are stored per setting block with subsets ordered
by bitmask (party i on bit i-1), so for two parties a block reads
(empty, {1}, {2}, {1,2}).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .scenario import (
    BehaviorVector,
    Scenario,
    ScenarioError,
    check_settings,
    check_subset,
    encode_index,
    mask_to_subset,
    outcome_from_rank,
    setting_from_rank,
    subset_to_mask,
)

ABSENT = -1


def parity(I: Sequence[int], a: Sequence[int]) -> int:
    """chi_I(a) = (-1)^(xor of a_i over i in I); +1 for the empty subset. Parties are 1-based."""
    s = 0
    for i in I:
        s ^= a[i - 1]
    return -1 if s else 1


@lru_cache(maxsize=None)
def parity_matrix(n: int) -> np.ndarray:
    """H[mask, lex(a)] = chi_{subset(mask)}(a), an integer Walsh-Hadamard matrix."""
    H = np.empty((2 ** n, 2 ** n), dtype=np.int64)
    outcomes = list(itertools.product((0, 1), repeat=n))
    for mask in range(2 ** n):
        I = mask_to_subset(mask, n)
        for k, a in enumerate(outcomes):
            H[mask, k] = parity(I, a)
    H.flags.writeable = False
    return H


# -- correlator keys --------------------------------------------------------

def key_from(I: Sequence[int], x_I: Sequence[int], n: int) -> tuple[int, ...]:
    key = [ABSENT] * n
    for i, xi in zip(I, x_I):
        key[i - 1] = int(xi)
    return tuple(key)


def split_key(key: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    I = tuple(i + 1 for i, v in enumerate(key) if v != ABSENT)
    return I, tuple(v for v in key if v != ABSENT)


def key_rank(scenario: Scenario, key: Sequence[int]) -> int:
    r = 0
    for v in key:
        r = r * (scenario.m + 1) + (v + 1)
    return r


@lru_cache(maxsize=None)
def _keys(n: int, m: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.product(range(-1, m), repeat=n))


def correlator_keys(scenario: Scenario) -> tuple[tuple[int, ...], ...]:
    """All (m+1)^n keys in canonical order."""
    return _keys(scenario.n, scenario.m)


def check_key(scenario: Scenario, I: Sequence[int], x_I: Sequence[int]) -> tuple[int, ...]:
    I = check_subset(scenario, I)
    x_I = check_settings(scenario, x_I, parties=I)
    return key_from(I, x_I, scenario.n)


def restrict(x: Sequence[int], I: Sequence[int]) -> tuple[int, ...]:
    return tuple(x[i - 1] for i in I)


# -- tables -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SettingwiseCorrelators:
    """C^I_x for every subset I and full setting tuple x; ``values[lex(x), mask(I)]``."""

    scenario: Scenario
    values: np.ndarray = field(repr=False)

    def __getitem__(self, key):
        I, x = key
        I = check_subset(self.scenario, I)
        x = check_settings(self.scenario, x)
        r = 0
        for v in x:
            r = r * self.scenario.m + v
        return self.values[r, subset_to_mask(I)]

    def flat(self) -> np.ndarray:
        """Concatenated blocks, i.e. the T1 output vector."""
        return self.values.reshape(-1)


@dataclass(frozen=True, eq=False)
class CorrelatorTable:
    """UMC values for every (I, x_I), empty subset included."""

    scenario: Scenario
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.shape != (self.scenario.n_correlators,):
            raise ScenarioError(f"correlator table for {self.scenario} needs {self.scenario.n_correlators} values, got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __getitem__(self, key):
        I, x_I = key
        return self.values[key_rank(self.scenario, check_key(self.scenario, I, x_I))]

    def __len__(self):
        return len(self.values)

    def items(self):
        for key, v in zip(correlator_keys(self.scenario), self.values):
            yield split_key(key), float(v)

    @classmethod
    def from_mapping(cls, scenario: Scenario, mapping: Mapping) -> "CorrelatorTable":
        """Build from ``{(I, x_I): value}``; every key must be present."""
        values = np.full(scenario.n_correlators, np.nan)
        for (I, x_I), v in mapping.items():
            values[key_rank(scenario, check_key(scenario, I, x_I))] = v
        missing = [split_key(k) for k, v in zip(correlator_keys(scenario), values) if np.isnan(v)]
        if missing:
            raise ScenarioError(f"correlator table incomplete, missing (I, x_I) keys: {missing}")
        return cls(scenario, values)

    def to_json(self) -> dict:
        return {
            "scenario": {"n": self.scenario.n, "m": self.scenario.m},
            "entries": [{"I": list(I), "xI": list(x_I), "value": v} for (I, x_I), v in self.items()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CorrelatorTable":
        scenario = Scenario(int(obj["scenario"]["n"]), int(obj["scenario"]["m"]))
        mapping = {}
        for e in obj["entries"]:
            key = (tuple(e["I"]), tuple(e["xI"]))
            if key in mapping:
                raise ScenarioError(f"duplicate correlator key {key}")
            mapping[key] = float(e["value"])
        return cls.from_mapping(scenario, mapping)


# -- linear maps ------------------------------------------------------------

def parity_transform(scenario: Scenario) -> np.ndarray:
    """T1 (d x d, integer): block-diagonal, one Walsh-Hadamard block per setting tuple."""
    return np.kron(np.eye(scenario.n_settings, dtype=np.int64), parity_matrix(scenario.n))


def averaging_map(scenario: Scenario, weights: np.ndarray | None = None, exact: bool = False) -> np.ndarray:
    """T2 ((m+1)^n x d): averages C^I_x over the settings of the parties outside I.

    With ``weights`` (one positive value per setting tuple, lex order) the
    average is weighted. ``exact`` returns an object array of Fractions.
    """
    n, m = scenario.n, scenario.m
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (scenario.n_settings,):
            raise ScenarioError(f"need {scenario.n_settings} setting weights, got shape {weights.shape}")
        if np.any(weights <= 0):
            raise ScenarioError("setting weights must be strictly positive")
    T2 = np.zeros((scenario.n_correlators, scenario.d), dtype=object if exact else float)
    for row, key in enumerate(correlator_keys(scenario)):
        I, x_I = split_key(key)
        mask = subset_to_mask(I)
        cols = [r * 2 ** n + mask for r in range(scenario.n_settings)
                if restrict(setting_from_rank(scenario, r), I) == x_I]
        if weights is None:
            share = Fraction(1, m ** (n - len(I))) if exact else 1.0 / m ** (n - len(I))
            for c in cols:
                T2[row, c] = share
        else:
            w = weights[[c // 2 ** n for c in cols]]
            T2[row, cols] = w / w.sum()
    return T2


def reconstruction_map(scenario: Scenario, exact: bool = False) -> np.ndarray:
    """T3 (d x (m+1)^n): p(a|x) = 2^-n sum_I chi_I(a) Cbar^I_{x_I}."""
    n = scenario.n
    T3 = np.zeros((scenario.d, scenario.n_correlators), dtype=object if exact else float)
    scale = Fraction(1, 2 ** n) if exact else 1.0 / 2 ** n
    subsets = scenario.subsets()
    for idx in range(scenario.d):
        xr, ar = divmod(idx, 2 ** n)
        x, a = setting_from_rank(scenario, xr), outcome_from_rank(scenario, ar)
        for I in subsets:
            col = key_rank(scenario, key_from(I, restrict(x, I), n))
            T3[idx, col] = parity(I, a) * scale
    return T3


@lru_cache(maxsize=None)
def _float_maps(n: int, m: int):
    s = Scenario(n, m)
    maps = (parity_transform(s).astype(float), averaging_map(s), reconstruction_map(s))
    for M in maps:
        M.flags.writeable = False
    return maps


# -- operations on behaviours ----------------------------------------------

def _entries(v) -> tuple[Scenario, np.ndarray]:
    if not isinstance(v, BehaviorVector):
        raise ScenarioError(f"expected a BehaviorVector, got {type(v).__name__}")
    return v.scenario, v.entries


def settingwise_correlators(v: BehaviorVector) -> SettingwiseCorrelators:
    """C^I_x = sum_a chi_I(a) v(a|x) for every subset and setting tuple."""
    scenario, e = _entries(v)
    blocks = e.reshape(scenario.n_settings, scenario.n_outcomes)
    return SettingwiseCorrelators(scenario, blocks @ parity_matrix(scenario.n).T)


def umc(v: BehaviorVector) -> CorrelatorTable:
    """Uniformly-averaged marginal correlators; the empty-subset entry is the mean block sum."""
    scenario, _ = _entries(v)
    _, T2, _ = _float_maps(scenario.n, scenario.m)
    return CorrelatorTable(scenario, T2 @ settingwise_correlators(v).flat())


@dataclass(frozen=True, eq=False)
class UmcCoefficientVector:
    scenario: Scenario
    I: tuple[int, ...]
    x_I: tuple[int, ...]
    entries: np.ndarray = field(repr=False)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def umc_coefficient_vector_scaled(scenario: Scenario, I: Sequence[int], x_I: Sequence[int]) -> np.ndarray:
    """Integer vector m^(n-|I|) * c^I_{x_I}: chi_I(a) on blocks whose settings agree with x_I."""
    key = check_key(scenario, I, x_I)
    I, x_I = split_key(key)
    H = parity_matrix(scenario.n)[subset_to_mask(I)]
    out = np.zeros(scenario.d, dtype=np.int64)
    for r in range(scenario.n_settings):
        if restrict(setting_from_rank(scenario, r), I) == x_I:
            out[r * scenario.n_outcomes:(r + 1) * scenario.n_outcomes] = H
    return out


def umc_coefficient_vector(scenario: Scenario, I: Sequence[int], x_I: Sequence[int]) -> UmcCoefficientVector:
    """c^I_{x_I}(a, x) = chi_I(a) [x_I matches] / m^(n-|I|), so that c . v = umc(v)[I, x_I]."""
    scaled = umc_coefficient_vector_scaled(scenario, I, x_I)
    I, x_I = split_key(check_key(scenario, I, x_I))
    entries = scaled / float(scenario.m ** (scenario.n - len(I)))
    entries.flags.writeable = False
    return UmcCoefficientVector(scenario, I, x_I, entries)


def all_umc_vectors(scenario: Scenario, include_empty: bool = False) -> list[UmcCoefficientVector]:
    out = []
    for key in correlator_keys(scenario):
        I, x_I = split_key(key)
        if I or include_empty:
            out.append(umc_coefficient_vector(scenario, I, x_I))
    return out


def probabilities_from_correlators(table: CorrelatorTable | Mapping, scenario: Scenario | None = None) -> BehaviorVector:
    """Inverse formula p(a|x) = 2^-n sum_I chi_I(a) C^I_{x_I}, empty subset included.

    Accepts a :class:`CorrelatorTable` or a ``{(I, x_I): value}`` mapping
    (then ``scenario`` is required and missing keys raise).
    """
    if not isinstance(table, CorrelatorTable):
        if scenario is None:
            raise ScenarioError("a scenario is required to read a correlator mapping")
        table = CorrelatorTable.from_mapping(scenario, table)
    s = table.scenario
    _, _, T3 = _float_maps(s.n, s.m)
    return BehaviorVector(s, T3 @ table.values, "unconstrained")


def full_correlator(v: BehaviorVector, x: Sequence[int]) -> float:
    """Standard n-party correlator sum_a (-1)^(a_1 + ... + a_n) v(a|x)."""
    scenario, e = _entries(v)
    x = check_settings(scenario, x)
    return float(sum(parity(range(1, scenario.n + 1), a) * e[encode_index(scenario, a, x)]
                     for a in scenario.outcome_tuples()))
