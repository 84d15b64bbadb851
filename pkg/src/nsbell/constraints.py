"""Sparse no-signalling and normalisation equality system ``A_eq p = b``."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, TextIO

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .scenario import (
    BehaviorVector,
    Scenario,
    ScenarioError,
    check_settings,
    encode_index,
)

# Relative singular-value threshold for the numerical rank of A_eq.
RANK_RTOL = 1e-9


class RankError(ArithmeticError):
    """The singular values of A_eq show no clean gap at the rank threshold."""

    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


@dataclass(frozen=True)
class SparseRow:
    """One row of A_eq as ``(flat index, coefficient)`` pairs.

    ``label`` is ``(i, r, (a_rest, x_rest))`` for no-signalling rows and the
    setting tuple for normalisation rows.
    """

    support: tuple[tuple[int, int], ...]
    kind: str
    label: tuple

    def dense(self, d: int) -> np.ndarray:
        v = np.zeros(d, dtype=np.int64)
        for idx, c in self.support:
            v[idx] += c
        return v

    def dot(self, v) -> float:
        return sum(c * v[idx] for idx, c in self.support)


def _insert(rest: Sequence[int], i: int, value: int) -> tuple[int, ...]:
    return tuple(rest[: i - 1]) + (value,) + tuple(rest[i - 1:])


def nosig_row(scenario: Scenario, i: int, r: int, a_rest: Sequence[int], x_rest: Sequence[int]) -> SparseRow:
    """Row asserting p(a_rest | x_rest, x_i=0) = p(a_rest | x_rest, x_i=r) for the other parties.

    ``i`` is 1-based and ``r`` must be a non-reference setting (1..m-1).
    """
    if not 1 <= i <= scenario.n:
        raise ScenarioError(f"party i={i} out of range 1..{scenario.n}")
    if r == 0:
        raise ScenarioError("r=0 is the reference setting; a no-signalling row compares it with r in 1..m-1")
    if not 1 <= r < scenario.m:
        raise ScenarioError(f"setting r={r} out of range 1..{scenario.m - 1}")
    others = [j for j in range(1, scenario.n + 1) if j != i]
    a_rest = tuple(int(v) for v in a_rest)
    x_rest = tuple(int(v) for v in x_rest)
    if len(a_rest) != scenario.n - 1 or len(x_rest) != scenario.n - 1:
        raise ScenarioError(f"context tuples must have length {scenario.n - 1}")
    for j, v in zip(others, a_rest):
        if v not in (0, 1):
            raise ScenarioError(f"outcome a_{j}={v} out of range {{0,1}}")
    check_settings(scenario, x_rest, parties=others)
    support = []
    for setting, sign in ((0, 1), (r, -1)):
        x = _insert(x_rest, i, setting)
        for ai in (0, 1):
            support.append((encode_index(scenario, _insert(a_rest, i, ai), x), sign))
    return SparseRow(tuple(support), "nosig", (i, r, (a_rest, x_rest)))


def norm_row(scenario: Scenario, x: Sequence[int]) -> SparseRow:
    """Row summing the 2^n outcome entries of setting block ``x``."""
    x = check_settings(scenario, x)
    support = tuple((encode_index(scenario, a, x), 1) for a in scenario.outcome_tuples())
    return SparseRow(support, "norm", x)


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    scenario: Scenario
    rows: tuple[SparseRow, ...] = field(repr=False)

    @property
    def n_nosig(self) -> int:
        return sum(1 for r in self.rows if r.kind == "nosig")

    @property
    def n_norm(self) -> int:
        return sum(1 for r in self.rows if r.kind == "norm")

    @cached_property
    def rhs(self) -> np.ndarray:
        return np.array([0.0 if r.kind == "nosig" else 1.0 for r in self.rows])

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """A_eq as a sparse integer matrix (t x d)."""
        rows, cols, vals = [], [], []
        for k, row in enumerate(self.rows):
            for idx, c in row.support:
                rows.append(k)
                cols.append(idx)
                vals.append(c)
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(self.rows), self.scenario.d), dtype=np.int64)

    @cached_property
    def nosig_matrix(self) -> sp.csr_matrix:
        return self.matrix[: self.n_nosig]

    @cached_property
    def _kernel(self) -> tuple[np.ndarray, int]:
        dense = self.matrix.toarray().astype(float)
        u, s, vt = scipy.linalg.svd(dense)
        cutoff = RANK_RTOL * s[0]
        rank = int(np.sum(s > cutoff))
        # the smallest kept and the largest dropped singular value must be well separated
        kept = s[rank - 1]
        dropped = s[rank] if rank < len(s) else 0.0
        if dropped > 0 and kept / dropped < 1e3:
            raise RankError(f"no clear singular-value gap at rank {rank}: {kept:.3e} vs {dropped:.3e}", kept - dropped)
        return vt[rank:].T.copy(), rank

    @property
    def rank(self) -> int:
        return self._kernel[1]

    def kernel_basis(self) -> np.ndarray:
        """d x k matrix with orthonormal columns spanning ker(A_eq)."""
        return self._kernel[0]


def build_constraint_system(scenario: Scenario) -> ConstraintSystem:
    """All no-signalling rows (party, setting, context order) followed by all normalisation rows."""
    rows = []
    for i in range(1, scenario.n + 1):
        for r in range(1, scenario.m):
            for a_rest in itertools.product((0, 1), repeat=scenario.n - 1):
                for x_rest in itertools.product(range(scenario.m), repeat=scenario.n - 1):
                    rows.append(nosig_row(scenario, i, r, a_rest, x_rest))
    for x in scenario.setting_tuples():
        rows.append(norm_row(scenario, x))
    return ConstraintSystem(scenario, tuple(rows))


def kernel_basis(system: ConstraintSystem) -> np.ndarray:
    return system.kernel_basis()


@dataclass(frozen=True)
class Residual:
    nosig: np.ndarray
    norm: np.ndarray

    @property
    def max_nosig(self) -> float:
        return float(np.max(np.abs(self.nosig), initial=0.0))

    @property
    def max_norm(self) -> float:
        return float(np.max(np.abs(self.norm), initial=0.0))

    @property
    def max_abs(self) -> float:
        return max(self.max_nosig, self.max_norm)

    def summary(self) -> dict:
        return {"max_nosig": self.max_nosig, "max_norm": self.max_norm, "max_abs": self.max_abs}


def residual(system: ConstraintSystem, v) -> Residual:
    """``A_eq v - b`` split into its no-signalling and normalisation parts."""
    if isinstance(v, BehaviorVector) and v.scenario != system.scenario:
        raise ScenarioError(f"behaviour scenario {v.scenario} does not match constraint system {system.scenario}")
    v = np.asarray(v, dtype=float)
    if v.shape != (system.scenario.d,):
        raise ScenarioError(f"vector of shape {v.shape} does not match d={system.scenario.d}")
    r = system.matrix @ v - system.rhs
    k = system.n_nosig
    return Residual(r[:k], r[k:])


def dump_coo(system: ConstraintSystem, stream: TextIO) -> None:
    """Debug dump: ``row col coeff`` lines, then a ``# rhs`` section."""
    coo = system.matrix.tocoo()
    for r, c, v in sorted(zip(coo.row, coo.col, coo.data)):
        stream.write(f"{r} {c} {v}\n")
    stream.write("# rhs\n")
    for k, b in enumerate(system.rhs):
        stream.write(f"{k} {b:g}\n")
