"""Count tables: CSV ingestion, frequencies, signalling diagnostics, synthetic drift data."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence, TextIO

import numpy as np

from .constraints import ConstraintSystem, build_constraint_system, residual
from .projection import SettingsWeights, _kernel_projector_matrix
from .scenario import (
    BehaviorVector,
    Scenario,
    ScenarioError,
    check_outcomes,
    check_settings,
    decode_index,
    encode_index,
)


@dataclass(frozen=True, eq=False)
class CountTable:
    """Nonnegative integer counts N(a, x) in canonical flat order."""

    scenario: Scenario
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.counts)
        if c.shape != (self.scenario.d,):
            raise ScenarioError(f"count table for {self.scenario} needs {self.scenario.d} entries, got shape {c.shape}")
        if c.dtype.kind == "f":
            if not np.all(np.isfinite(c)) or np.any(c != np.round(c)):
                raise ScenarioError("counts must be integers")
        elif c.dtype.kind not in "iu":
            raise ScenarioError(f"counts must be integers, got dtype {c.dtype}")
        c = c.astype(np.int64)
        if np.any(c < 0):
            idx = int(np.argmin(c))
            a, x = decode_index(self.scenario, idx)
            raise ScenarioError(f"negative count {c[idx]} for a={a}, x={x}")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    def __getitem__(self, key) -> int:
        a, x = key
        return int(self.counts[encode_index(self.scenario, a, x)])

    @property
    def setting_totals(self) -> np.ndarray:
        """N(x) for each setting tuple in lex order."""
        return self.counts.reshape(self.scenario.n_settings, self.scenario.n_outcomes).sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def exact_frequencies(self) -> list[Fraction]:
        """f(a|x) = N(a,x)/N(x) as Fractions."""
        totals = self.setting_totals
        k = self.scenario.n_outcomes
        return [Fraction(int(c), int(totals[i // k])) for i, c in enumerate(self.counts)]


def _header(n: int) -> list[str]:
    return [f"x{i}" for i in range(1, n + 1)] + [f"a{i}" for i in range(1, n + 1)] + ["count"]


def load_counts(stream: TextIO, scenario: Scenario) -> CountTable:
    """Read ``x1,...,xn,a1,...,an,count`` rows; absent (a, x) pairs count 0."""
    n = scenario.n
    reader = csv.reader(stream)
    expected = _header(n)
    header = None
    counts = np.zeros(scenario.d, dtype=np.int64)
    seen: dict[int, int] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in row]
        if header is None:
            if cells != expected:
                raise ScenarioError(f"line {line}: header must be {','.join(expected)}, got {','.join(cells)}")
            header = cells
            continue
        if len(cells) != 2 * n + 1:
            raise ScenarioError(f"line {line}: expected {2 * n + 1} fields, got {len(cells)}")
        try:
            values = [int(c) for c in cells]
        except ValueError:
            raise ScenarioError(f"line {line}: non-integer field in {','.join(cells)}") from None
        x, a, c = values[:n], values[n:2 * n], values[-1]
        try:
            idx = encode_index(scenario, check_outcomes(scenario, a), check_settings(scenario, x))
        except ScenarioError as exc:
            raise ScenarioError(f"line {line}: {exc}") from None
        if c < 0:
            raise ScenarioError(f"line {line}: negative count {c}")
        if idx in seen:
            raise ScenarioError(f"line {line}: duplicate key x={tuple(x)}, a={tuple(a)} (first seen on line {seen[idx]})")
        seen[idx] = line
        counts[idx] = c
    if header is None:
        raise ScenarioError("empty count file: no header found")
    return CountTable(scenario, counts)


def write_counts(table: CountTable, stream: TextIO) -> None:
    """Inverse of :func:`load_counts`; writes every (x, a) row including zeros."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(_header(table.scenario.n))
    for idx, c in enumerate(table.counts):
        a, x = decode_index(table.scenario, idx)
        w.writerow([*x, *a, int(c)])


def load_grid222(stream: TextIO) -> CountTable:
    """4x4 grid for (2,2,2): rows are xy = 00, 01, 10, 11 and columns ab = 00, 01, 10, 11.

    Separators may be commas or whitespace; blank and ``#`` lines are skipped.
    """
    s = Scenario(2, 2)
    rows = []
    for line_no, line in enumerate(stream, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.replace(",", " ").split()
        if len(parts) != 4:
            raise ScenarioError(f"line {line_no}: grid row needs 4 counts, got {len(parts)}")
        try:
            rows.append([int(p) for p in parts])
        except ValueError:
            raise ScenarioError(f"line {line_no}: non-integer count in {text!r}") from None
    if len(rows) != 4:
        raise ScenarioError(f"grid needs 4 rows, got {len(rows)}")
    # block order (x lex) and outcome order (a lex) coincide with the grid layout
    return CountTable(s, np.array(rows, dtype=np.int64).ravel())


def frequencies(table: CountTable) -> tuple[BehaviorVector, SettingsWeights]:
    """f(a|x) = N(a,x)/N(x) and the observed settings distribution pi(x) = N(x)/N."""
    totals = table.setting_totals
    if np.any(totals == 0):
        empty = [tuple(int(v) for v in decode_index(table.scenario, i * table.scenario.n_outcomes)[1])
                 for i in np.flatnonzero(totals == 0)]
        raise ScenarioError(f"setting block(s) with no trials: {empty}")
    f = np.array([float(q) for q in table.exact_frequencies()])
    pi = SettingsWeights(table.scenario, totals / totals.sum())
    return BehaviorVector(table.scenario, f, "frequency"), pi


@dataclass(frozen=True)
class MarginalPair:
    """The two marginals compared by one no-signalling row."""

    party: int
    setting: int
    context: tuple
    values: tuple[float, float]
    residual: float

    def describe(self, digits: int = 6) -> str:
        a_rest, x_rest = self.context
        return (f"party {self.party} switching setting 0 -> {self.setting}: "
                f"p(a_rest={a_rest} | x_rest={x_rest}) = {self.values[0]:.{digits}g} vs {self.values[1]:.{digits}g}")


@dataclass(frozen=True)
class SignallingReport:
    scenario: Scenario
    rows: tuple[MarginalPair, ...]
    norm_residual: float

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.rows])

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals), initial=0.0))

    @property
    def mean_residual(self) -> float:
        return float(np.mean(np.abs(self.residuals))) if self.rows else 0.0

    @property
    def worst(self) -> MarginalPair | None:
        if not self.rows:
            return None
        return self.rows[int(np.argmax(np.abs(self.residuals)))]

    def to_json(self) -> dict:
        return {
            "scenario": {"n": self.scenario.n, "m": self.scenario.m},
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "norm_residual": self.norm_residual,
            "rows": [{"party": r.party, "setting": r.setting, "a_rest": list(r.context[0]),
                      "x_rest": list(r.context[1]), "values": list(r.values), "residual": r.residual}
                     for r in self.rows],
        }

    def find(self, party: int, setting: int, a_rest: Sequence[int], x_rest: Sequence[int]) -> MarginalPair:
        key = (party, setting, (tuple(a_rest), tuple(x_rest)))
        for r in self.rows:
            if (r.party, r.setting, r.context) == key:
                return r
        raise ScenarioError(f"no no-signalling row for party {party}, setting {setting}, context {key[2]}")

    def summary(self, digits: int = 12) -> str:
        lines = [f"no-signalling rows: {len(self.rows)}",
                 f"max |residual|: {self.max_residual:.12g}",
                 f"mean |residual|: {self.mean_residual:.12g}",
                 f"max |normalisation residual|: {self.norm_residual:.12g}"]
        if self.worst is not None:
            lines.append("worst: " + self.worst.describe(digits))
        return "\n".join(lines)


def signalling_report(f: BehaviorVector, system: ConstraintSystem | None = None) -> SignallingReport:
    """Per-row no-signalling residuals with the marginal pair each row compares."""
    system = system or build_constraint_system(f.scenario)
    res = residual(system, f)
    e = f.entries
    rows = []
    for k, row in enumerate(system.rows[: system.n_nosig]):
        i, r, context = row.label
        left = sum(e[idx] for idx, c in row.support if c > 0)
        right = sum(e[idx] for idx, c in row.support if c < 0)
        rows.append(MarginalPair(i, r, context, (float(left), float(right)), float(res.nosig[k])))
    return SignallingReport(f.scenario, tuple(rows), res.max_norm)


def drift_direction(scenario: Scenario, seed: int) -> np.ndarray:
    """Unit vector with zero block sums and no component in ker(A_eq).

    Adding it to a behaviour keeps normalisation but changes the marginals,
    i.e. it injects genuine signalling.
    """
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(scenario.d)
    blocks = u.reshape(scenario.n_settings, scenario.n_outcomes)
    u = (blocks - blocks.mean(axis=1, keepdims=True)).ravel()
    u -= _kernel_projector_matrix(scenario.n, scenario.m) @ u
    norm = np.linalg.norm(u)
    if norm < 1e-12:
        raise ScenarioError(f"{scenario} admits no signalling direction")
    return u / norm


def generate_drift_counts(base: BehaviorVector, trials_per_setting: int | Mapping | Sequence[int],
                          drift_amplitude: float, blocks: int, seed: int, *,
                          mode: str = "sample") -> CountTable:
    """Synthetic counts from a behaviour drifting over sequential setting blocks.

    Each setting's trials are split into ``blocks`` consecutive chunks; chunk b
    uses ``base + drift_amplitude * (b/blocks - 1/2) * u`` with ``u`` from
    :func:`drift_direction`. ``mode='expected'`` returns rounded expected counts.
    """
    s = base.scenario
    if mode not in ("sample", "expected"):
        raise ScenarioError(f"mode must be 'sample' or 'expected', got {mode!r}")
    if int(blocks) != blocks or blocks < 1:
        raise ScenarioError(f"blocks must be a positive integer, got {blocks!r}")
    if not np.isfinite(drift_amplitude):
        raise ScenarioError("drift amplitude must be finite")
    if base.has_negative or np.max(np.abs(base.block_sums() - 1.0)) > 1e-12:
        raise ScenarioError("base behaviour must be a normalised, nonnegative behaviour")
    system = build_constraint_system(s)
    if residual(system, base).max_nosig > 1e-12:
        raise ScenarioError("base behaviour must be no-signalling")
    trials = _trials(s, trials_per_setting)
    u = drift_direction(s, seed) if drift_amplitude else np.zeros(s.d)
    rng = np.random.default_rng(seed)
    k = s.n_outcomes
    base_blocks = base.blocks
    u_blocks = u.reshape(s.n_settings, k)
    counts = np.zeros((s.n_settings, k), dtype=np.int64)
    for xr in range(s.n_settings):
        sizes = np.full(blocks, trials[xr] // blocks)
        sizes[: trials[xr] % blocks] += 1
        expected = np.zeros(k)
        for b in range(blocks):
            q = base_blocks[xr] + drift_amplitude * (b / blocks - 0.5) * u_blocks[xr]
            if np.any(q < -1e-15) or np.any(q > 1 + 1e-15):
                raise ScenarioError(f"drift {drift_amplitude} pushes a probability outside [0,1] in block {b} of setting rank {xr}")
            q = np.clip(q, 0.0, 1.0)
            q /= q.sum()
            if mode == "sample":
                counts[xr] += rng.multinomial(int(sizes[b]), q)
            else:
                expected += sizes[b] * q
        if mode == "expected":
            counts[xr] = np.rint(expected).astype(np.int64)
    return CountTable(s, counts.ravel())


def _trials(s: Scenario, spec) -> np.ndarray:
    if isinstance(spec, Mapping):
        out = np.zeros(s.n_settings, dtype=np.int64)
        for x in s.setting_tuples():
            if x not in spec:
                raise ScenarioError(f"no trial count given for setting {x}")
        for x, v in spec.items():
            out[encode_index(s, (0,) * s.n, x) // s.n_outcomes] = v
    elif np.ndim(spec) == 0:
        out = np.full(s.n_settings, spec, dtype=np.int64)
    else:
        out = np.asarray(spec, dtype=np.int64)
        if out.shape != (s.n_settings,):
            raise ScenarioError(f"need {s.n_settings} trial counts, got shape {out.shape}")
    if np.any(out <= 0):
        raise ScenarioError("trials per setting must be positive")
    return out
