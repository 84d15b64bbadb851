"""Projection of (weakly signalling) behaviours onto the no-signalling affine hull.

The closed-form route is ``p_hat = T3 T2 T1 f``: parity correlators per setting
block, averaging over the settings of the parties outside each subset, then the
inverse formula. The empty-subset correlator is pinned to 1 before
reconstruction, so inputs whose blocks do not sum to one are still sent to the
Euclidean-closest point of the hull (for normalised inputs this is exactly the
three-map composite).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from .constraints import ConstraintSystem, build_constraint_system, residual
from .correlators import (
    _float_maps,
    averaging_map,
    correlator_keys,
    parity_transform,
    reconstruction_map,
)
from .scenario import BehaviorVector, Scenario, ScenarioError, uniform_behavior

log = logging.getLogger(__name__)

# Gram matrices with a larger condition estimate are rejected by the direct projector.
MAX_GRAM_CONDITION = 1e12
ML_FLOOR = 1e-12


class ConvergenceError(RuntimeError):
    """An iterative routine ran out of budget; ``info`` carries its last state."""

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


@dataclass(frozen=True, eq=False)
class PipelineMaps:
    """T1 (d x d), T2 ((m+1)^n x d), T3 (d x (m+1)^n) for one scenario.

    Built with ``exact=True`` the matrices are object arrays of integers and
    Fractions; otherwise float.
    """

    scenario: Scenario
    T1: np.ndarray = field(repr=False)
    T2: np.ndarray = field(repr=False)
    T3: np.ndarray = field(repr=False)

    @property
    def composite(self) -> np.ndarray:
        return self.T3 @ (self.T2 @ self.T1)


def build_pipeline_maps(scenario: Scenario, exact: bool = False) -> PipelineMaps:
    if exact:
        return PipelineMaps(scenario, parity_transform(scenario).astype(object),
                            averaging_map(scenario, exact=True), reconstruction_map(scenario, exact=True))
    return PipelineMaps(scenario, *_float_maps(scenario.n, scenario.m))


def scaled_composite(scenario: Scenario) -> tuple[np.ndarray, int]:
    """Integer matrix Q and scale s with T3 T2 T1 = Q / s exactly (s = 2^n m^n)."""
    n, m = scenario.n, scenario.m
    T1 = parity_transform(scenario)
    T2 = averaging_map(scenario, exact=True) * (m ** n)
    T3 = reconstruction_map(scenario, exact=True) * (2 ** n)
    T2i = np.array(T2.tolist(), dtype=object)
    T3i = np.array(T3.tolist(), dtype=object)
    for M in (T2i, T3i):
        if any(getattr(v, "denominator", 1) != 1 for v in M.flat):
            raise AssertionError("scaled pipeline map is not integral")
    Q = np.array([[int(v) for v in row] for row in T3i], dtype=np.int64) @ \
        (np.array([[int(v) for v in row] for row in T2i], dtype=np.int64) @ T1)
    return Q, 2 ** n * m ** n


def _check(v: BehaviorVector, scenario: Scenario | None = None) -> np.ndarray:
    if not isinstance(v, BehaviorVector):
        raise ScenarioError(f"expected a BehaviorVector, got {type(v).__name__}")
    if scenario is not None and v.scenario != scenario:
        raise ScenarioError(f"behaviour scenario {v.scenario} does not match {scenario}")
    return v.entries


def _empty_row(scenario: Scenario) -> int:
    return correlator_keys(scenario).index((-1,) * scenario.n)


def project_l2(v: BehaviorVector) -> BehaviorVector:
    """Euclidean projection onto the no-signalling affine hull via the three-map pipeline."""
    e = _check(v)
    s = v.scenario
    T1, T2, T3 = _float_maps(s.n, s.m)
    t2 = T2 @ (T1 @ e)
    t2[_empty_row(s)] = 1.0
    return BehaviorVector(s, T3 @ t2, "unconstrained")


def kernel_projector(system: ConstraintSystem, D: np.ndarray | None = None) -> np.ndarray:
    """B (B^T D B)^-1 B^T D for a kernel basis B of A_eq (D = identity when omitted)."""
    B = system.kernel_basis()
    DB = B if D is None else D[:, None] * B
    G = B.T @ DB
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > MAX_GRAM_CONDITION:
        raise ConvergenceError(f"kernel Gram matrix is ill-conditioned (cond ~ {cond:.3e})", condition=cond)
    return B @ scipy.linalg.solve(G, DB.T, assume_a="pos")


def project_direct(v: BehaviorVector, system: ConstraintSystem | None = None) -> BehaviorVector:
    """Reference projector Pi_ker (v - d) + d with d the outcome-uniform behaviour."""
    e = _check(v)
    system = system or build_constraint_system(v.scenario)
    if system.scenario != v.scenario:
        raise ScenarioError(f"constraint system {system.scenario} does not match behaviour {v.scenario}")
    d = uniform_behavior(v.scenario).entries
    return BehaviorVector(v.scenario, kernel_projector(system) @ (e - d) + d, "unconstrained")


@dataclass(frozen=True, eq=False)
class SettingsWeights:
    """One strictly positive weight per setting tuple (lex order)."""

    scenario: Scenario
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.scenario.n_settings,):
            raise ScenarioError(f"{self.scenario} needs {self.scenario.n_settings} setting weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ScenarioError(f"setting weights must be finite and strictly positive, got min {w.min()!r}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, scenario: Scenario) -> "SettingsWeights":
        return cls(scenario, np.full(scenario.n_settings, 1.0 / scenario.n_settings))

    def normalized(self) -> "SettingsWeights":
        return SettingsWeights(self.scenario, self.weights / self.weights.sum())

    def diag(self) -> np.ndarray:
        """Diagonal of D: weight(x) repeated over the 2^n outcomes of block x."""
        return np.repeat(self.weights, self.scenario.n_outcomes)

    def inner(self, u, v) -> float:
        return float(np.asarray(u) @ (self.diag() * np.asarray(v)))

    def to_json(self) -> dict:
        return {"scenario": {"n": self.scenario.n, "m": self.scenario.m}, "weights": [float(w) for w in self.weights]}

    @classmethod
    def from_json(cls, obj: dict) -> "SettingsWeights":
        try:
            scenario = Scenario(int(obj["scenario"]["n"]), int(obj["scenario"]["m"]))
            return cls(scenario, [float(w) for w in obj["weights"]])
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed weights JSON: {exc}") from exc


def project_weighted(v: BehaviorVector, weights: SettingsWeights) -> BehaviorVector:
    """Minimiser of ||v - p||_D over the affine hull, D constant on setting blocks.

    Same pipeline as :func:`project_l2` with the uniform average over the
    outside parties' settings replaced by the weight-proportional average.
    """
    e = _check(v, weights.scenario)
    s = v.scenario
    T1, _, T3 = _float_maps(s.n, s.m)
    t2 = averaging_map(s, weights.weights) @ (T1 @ e)
    t2[_empty_row(s)] = 1.0
    return BehaviorVector(s, T3 @ t2, "unconstrained")


def project_weighted_direct(v: BehaviorVector, weights: SettingsWeights,
                            system: ConstraintSystem | None = None) -> BehaviorVector:
    """Reference weighted projector B (B^T D B)^-1 B^T D (v - d) + d."""
    e = _check(v, weights.scenario)
    system = system or build_constraint_system(v.scenario)
    d = uniform_behavior(v.scenario).entries
    return BehaviorVector(v.scenario, kernel_projector(system, weights.diag()) @ (e - d) + d, "unconstrained")


# -- nonnegativity ----------------------------------------------------------

@lru_cache(maxsize=None)
def _kernel_projector_matrix(n: int, m: int) -> np.ndarray:
    # span of all UMC vectors = ker(A_eq) + span(ones); remove the ones direction
    s = Scenario(n, m)
    T1, T2, T3 = _float_maps(n, m)
    P = T3 @ T2 @ T1 - np.full((s.d, s.d), 1.0 / s.d)
    P.flags.writeable = False
    return P


def _polish(base: np.ndarray, active: np.ndarray, scenario: Scenario, tol: float):
    """Exact QP solution for a guessed active set, or None if KKT fails.

    Solves p = Pi_A(v + lam) with lam supported on ``active`` and p = 0 there,
    then checks p >= 0 and lam >= 0.
    """
    P = _kernel_projector_matrix(scenario.n, scenario.m)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return base if base.min() >= -tol else None
    lam, *_ = np.linalg.lstsq(P[np.ix_(idx, idx)], -base[idx], rcond=None)
    p = base + P[:, idx] @ lam
    if np.max(np.abs(p[idx])) > tol or p.min() < -tol or lam.min() < -tol:
        return None
    p[idx] = 0.0
    return np.maximum(p, 0.0)


def project_nonneg(v: BehaviorVector, system: ConstraintSystem | None = None, *,
                   tol: float = 1e-12, max_sweeps: int = 100_000, polish_every: int = 50) -> BehaviorVector:
    """Euclidean projection onto the no-signalling polytope (affine hull and orthant).

    Returns the hull projection unchanged when it is already nonnegative.
    Otherwise runs Dykstra's alternating projections between the hull and the
    orthant; every ``polish_every`` sweeps the current zero pattern is tried as
    an active set and accepted once it satisfies the KKT conditions.
    """
    _check(v)
    s = v.scenario
    if system is not None and system.scenario != s:
        raise ScenarioError(f"constraint system {system.scenario} does not match behaviour {s}")
    base = project_l2(v).entries
    if base.min() >= 0:
        return BehaviorVector(s, base, "probability") if _is_normalised(base, s) else BehaviorVector(s, base)
    x = np.maximum(base, 0.0)
    q = base - x
    scale = max(1.0, float(np.max(np.abs(base))))
    gap = np.inf
    for sweep in range(1, max_sweeps + 1):
        y = project_l2(BehaviorVector(s, x)).entries
        z = y + q
        x_new = np.maximum(z, 0.0)
        q = z - x_new
        # stationary iterates and agreement between the two sets
        gap = max(np.max(np.abs(x_new - x)), np.max(np.abs(x_new - y))) / scale
        x = x_new
        if sweep % polish_every == 0 or gap < tol:
            p = _polish(base, x <= 0.0, s, 1e-10)
            if p is not None:
                log.debug("nonneg projection polished after %d sweeps", sweep)
                return _as_prob(s, p)
        if gap < tol:
            return _as_prob(s, np.maximum(y, 0.0))
    raise ConvergenceError(f"nonnegative projection did not converge in {max_sweeps} sweeps (last gap {gap:.3e})",
                           gap=gap, sweeps=max_sweeps)


def _is_normalised(p: np.ndarray, s: Scenario) -> bool:
    return bool(np.max(np.abs(p.reshape(s.n_settings, -1).sum(axis=1) - 1.0)) <= 1e-12)


def _as_prob(s: Scenario, p: np.ndarray) -> BehaviorVector:
    return BehaviorVector(s, p, "probability" if _is_normalised(p, s) else "unconstrained")


# -- maximum likelihood -----------------------------------------------------

def ml_objective(p, f, pi: SettingsWeights, floor: float = ML_FLOOR) -> float:
    """sum_x pi(x) sum_a f(a|x) log2 p(a|x), with p floored inside the logarithm."""
    p = np.asarray(p, dtype=float)
    w = pi.diag() * np.asarray(f, dtype=float)
    return float(np.sum(w * np.log2(np.maximum(p, floor))))


@dataclass(frozen=True)
class MLResult:
    estimate: BehaviorVector
    objective: float
    iterations: int
    history: tuple[float, ...]


def estimate_ml(f: BehaviorVector, pi: SettingsWeights, system: ConstraintSystem | None = None, *,
                max_iter: int = 5000, tol: float = 1e-12, floor: float = ML_FLOOR,
                return_result: bool = False):
    """Maximum-likelihood no-signalling estimate by projected gradient ascent.

    Starts from the nonnegative L2 projection of ``f``, takes gradient steps
    on the log-likelihood with Armijo backtracking and restores feasibility with
    :func:`project_nonneg` after every step.
    """
    fe = _check(f, pi.scenario)
    s = f.scenario
    if np.any(fe < 0) or np.max(np.abs(f.block_sums() - 1.0)) > 1e-9:
        raise ScenarioError("ML estimation needs frequencies normalised per setting block")
    pi = pi.normalized()
    system = system or build_constraint_system(s)
    w = pi.diag() * fe

    def grad(p):
        return w / (np.maximum(p, floor) * math.log(2))

    p = project_nonneg(f, system).entries
    obj = ml_objective(p, fe, pi, floor)
    history = [obj]
    step = 1.0
    stationarity = np.inf
    for it in range(1, max_iter + 1):
        g = grad(p)
        # the feasible set lies in [0,1]^d, so longer moves only overshoot
        step = min(step, 10.0 / max(float(np.max(np.abs(g))), 1e-300))
        while True:
            q = project_nonneg(BehaviorVector(s, p + step * g), system).entries
            new = ml_objective(q, fe, pi, floor)
            if new >= obj + 1e-4 * g @ (q - p) or step < 1e-16:
                break
            step *= 0.5
        move = np.max(np.abs(q - p))
        stationarity = move / step
        if new < obj:
            # backtracking exhausted: p is stationary to working precision
            break
        p, obj = q, new
        history.append(obj)
        if move < tol or stationarity < 1e-10:
            break
        step *= 2.0
    else:
        raise ConvergenceError(f"ML estimate did not converge in {max_iter} iterations",
                               objective=obj, gradient_norm=stationarity)
    res = residual(system, p).max_abs
    if res > 1e-9:
        raise ConvergenceError(f"ML estimate left the affine hull (residual {res:.3e})",
                               objective=obj, gradient_norm=stationarity)
    est = _as_prob(s, p)
    if return_result:
        return MLResult(est, obj, len(history) - 1, tuple(history))
    return est
