"""(n, m, 2) Bell scenarios, flat indexing and behaviour vectors.

Behaviour vectors are laid out setting-major: all 2^n outcome entries of the
setting tuple ``x`` form one contiguous block, blocks are ordered by the
big-endian lexicographic rank of ``x`` and outcomes inside a block by the
big-endian rank of ``a`` (party 1 is the most significant digit).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

ROLES = ("probability", "frequency", "unconstrained")

# Entries below this are reported as negative on projector outputs.
NEGATIVE_TOL = 1e-12


class ScenarioError(ValueError):
    """Raised for out-of-range indices, mismatched scenarios and bad shapes."""


@dataclass(frozen=True)
class Scenario:
    """An ``(n, m, 2)`` configuration: n parties, m settings each, binary outcomes."""

    n: int
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ScenarioError(f"number of parties must be a positive integer, got {self.n!r}")
        if int(self.m) != self.m or self.m < 1:
            raise ScenarioError(f"number of settings must be a positive integer, got {self.m!r}")

    @property
    def d(self) -> int:
        """Ambient dimension (2m)^n."""
        return (2 * self.m) ** self.n

    @property
    def t(self) -> int:
        """Number of equality rows: m^n normalisation + n(m-1)(2m)^(n-1) no-signalling."""
        return self.m ** self.n + self.n * (self.m - 1) * (2 * self.m) ** (self.n - 1)

    @property
    def n_outcomes(self) -> int:
        return 2 ** self.n

    @property
    def n_settings(self) -> int:
        return self.m ** self.n

    @property
    def n_correlators(self) -> int:
        """(m+1)^n: one UMC per (subset, settings of the subset), empty subset included."""
        return (self.m + 1) ** self.n

    @property
    def kernel_dim(self) -> int:
        return self.n_correlators - 1

    def outcome_tuples(self) -> Iterator[tuple[int, ...]]:
        return itertools.product((0, 1), repeat=self.n)

    def setting_tuples(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(range(self.m), repeat=self.n)

    def subsets(self) -> list[tuple[int, ...]]:
        """All party subsets, ordered by bitmask with party i on bit i-1."""
        return [mask_to_subset(mask, self.n) for mask in range(2 ** self.n)]

    def __str__(self):
        return f"({self.n},{self.m},2)"


def _lex(values: Sequence[int], base: int) -> int:
    r = 0
    for v in values:
        r = r * base + v
    return r


def _unlex(r: int, base: int, length: int) -> tuple[int, ...]:
    out = []
    for _ in range(length):
        r, v = divmod(r, base)
        out.append(v)
    return tuple(reversed(out))


def check_outcomes(scenario: Scenario, a: Sequence[int]) -> tuple[int, ...]:
    a = tuple(int(v) for v in a)
    if len(a) != scenario.n:
        raise ScenarioError(f"outcome tuple {a} has length {len(a)}, expected {scenario.n}")
    for i, v in enumerate(a, start=1):
        if v not in (0, 1):
            raise ScenarioError(f"outcome a_{i}={v} out of range {{0,1}}")
    return a


def check_settings(scenario: Scenario, x: Sequence[int], *, parties: Sequence[int] | None = None) -> tuple[int, ...]:
    x = tuple(int(v) for v in x)
    expected = scenario.n if parties is None else len(parties)
    if len(x) != expected:
        raise ScenarioError(f"setting tuple {x} has length {len(x)}, expected {expected}")
    labels = range(1, expected + 1) if parties is None else parties
    for i, v in zip(labels, x):
        if not 0 <= v < scenario.m:
            raise ScenarioError(f"setting x_{i}={v} out of range 0..{scenario.m - 1}")
    return x


def check_subset(scenario: Scenario, members: Sequence[int]) -> tuple[int, ...]:
    """Validate a party subset: strictly increasing, 1-based, within [1..n]."""
    members = tuple(int(i) for i in members)
    if any(b <= a for a, b in zip(members, members[1:])):
        raise ScenarioError(f"party subset {members} must be strictly increasing")
    for i in members:
        if not 1 <= i <= scenario.n:
            raise ScenarioError(f"party {i} out of range 1..{scenario.n}")
    return members


def subset_to_mask(members: Sequence[int]) -> int:
    mask = 0
    for i in members:
        mask |= 1 << (i - 1)
    return mask


def mask_to_subset(mask: int, n: int) -> tuple[int, ...]:
    return tuple(i for i in range(1, n + 1) if mask >> (i - 1) & 1)


def setting_rank(scenario: Scenario, x: Sequence[int]) -> int:
    return _lex(check_settings(scenario, x), scenario.m)


def outcome_rank(scenario: Scenario, a: Sequence[int]) -> int:
    return _lex(check_outcomes(scenario, a), 2)


def encode_index(scenario: Scenario, a: Sequence[int], x: Sequence[int]) -> int:
    """Flat index of p(a|x): ``lex(x) * 2^n + lex(a)``."""
    return setting_rank(scenario, x) * scenario.n_outcomes + outcome_rank(scenario, a)


def decode_index(scenario: Scenario, idx: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Inverse of :func:`encode_index`; returns ``(a, x)``."""
    if not 0 <= idx < scenario.d:
        raise ScenarioError(f"index {idx} out of range 0..{scenario.d - 1}")
    xr, ar = divmod(int(idx), scenario.n_outcomes)
    return _unlex(ar, 2, scenario.n), _unlex(xr, scenario.m, scenario.n)


def setting_from_rank(scenario: Scenario, r: int) -> tuple[int, ...]:
    return _unlex(r, scenario.m, scenario.n)


def outcome_from_rank(scenario: Scenario, r: int) -> tuple[int, ...]:
    return _unlex(r, 2, scenario.n)


@dataclass(frozen=True, eq=False)
class BehaviorVector:
    """A length-(2m)^n vector of settings-conditional outcome probabilities.

    ``role`` is one of ``probability``, ``frequency`` or ``unconstrained``.
    Probability vectors are validated (nonnegative, unit block sums to 1e-12);
    unconstrained vectors may hold anything, e.g. raw projector output.
    """

    scenario: Scenario
    entries: np.ndarray = field(repr=False)
    role: str = "unconstrained"

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.shape != (self.scenario.d,):
            raise ScenarioError(f"behaviour for {self.scenario} needs {self.scenario.d} entries, got shape {arr.shape}")
        if self.role not in ROLES:
            raise ScenarioError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if self.role == "probability":
            if np.any(arr < 0):
                raise ScenarioError(f"probability behaviour has negative entry {arr.min():.3e}")
            gap = np.max(np.abs(self.block_sums_of(arr) - 1.0))
            if gap > 1e-12:
                raise ScenarioError(f"probability behaviour blocks do not sum to 1 (max gap {gap:.3e})")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    def block_sums_of(self, arr):
        return arr.reshape(self.scenario.n_settings, self.scenario.n_outcomes).sum(axis=1)

    @property
    def blocks(self) -> np.ndarray:
        """Entries reshaped to (m^n, 2^n): one row per setting tuple."""
        return self.entries.reshape(self.scenario.n_settings, self.scenario.n_outcomes)

    def block_sums(self) -> np.ndarray:
        return self.block_sums_of(self.entries)

    @cached_property
    def has_negative(self) -> bool:
        """True when some entry is below -1e-12 (projection left the orthant)."""
        return bool(np.any(self.entries < -NEGATIVE_TOL))

    def __getitem__(self, key):
        a, x = key
        return self.entries[encode_index(self.scenario, a, x)]

    def __len__(self):
        return self.scenario.d

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def with_entries(self, entries, role: str = "unconstrained") -> "BehaviorVector":
        return BehaviorVector(self.scenario, entries, role)

    def to_json(self) -> dict:
        return {
            "scenario": {"n": self.scenario.n, "m": self.scenario.m},
            "role": self.role,
            "entries": [float(v) for v in self.entries],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BehaviorVector":
        try:
            scenario = Scenario(int(obj["scenario"]["n"]), int(obj["scenario"]["m"]))
            entries = [float(v) for v in obj["entries"]]
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed behaviour JSON: {exc}") from exc
        return cls(scenario, entries, obj.get("role", "unconstrained"))


def uniform_behavior(scenario: Scenario) -> BehaviorVector:
    """The outcome-uniform behaviour d(a|x) = 1/2^n."""
    return BehaviorVector(scenario, np.full(scenario.d, 1.0 / scenario.n_outcomes), "probability")


def deterministic_strategies(scenario: Scenario) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Every local deterministic strategy: one outcome per (party, setting)."""
    per_party = list(itertools.product((0, 1), repeat=scenario.m))
    return itertools.product(per_party, repeat=scenario.n)


def deterministic_behavior(scenario: Scenario, strategy: Sequence[Sequence[int]]) -> BehaviorVector:
    """Behaviour in which party i answers ``strategy[i][x_i]`` with certainty."""
    p = np.zeros(scenario.d)
    for x in scenario.setting_tuples():
        a = tuple(strategy[i][x[i]] for i in range(scenario.n))
        p[encode_index(scenario, a, x)] = 1.0
    return BehaviorVector(scenario, p, "probability")


def random_local_behavior(scenario: Scenario, rng: np.random.Generator, n_components: int | None = None) -> BehaviorVector:
    """A random mixture of local deterministic strategies (always no-signalling)."""
    n_strats = (2 ** scenario.m) ** scenario.n
    k = n_components or min(n_strats, 8)
    weights = rng.dirichlet(np.ones(k))
    per_party = 2 ** scenario.m
    p = np.zeros(scenario.d)
    for w, code in zip(weights, rng.integers(0, n_strats, size=k)):
        strategy = []
        for _ in range(scenario.n):
            code, c = divmod(int(code), per_party)
            strategy.append(_unlex(c, 2, scenario.m))
        p += w * deterministic_behavior(scenario, strategy).entries
    return BehaviorVector(scenario, p / p.reshape(-1, scenario.n_outcomes).sum(axis=1).repeat(scenario.n_outcomes), "probability")
