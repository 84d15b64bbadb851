"""Bell expressions, their projection-invariant canonical form and a small library.

A Bell functional may be given by probability coefficients gamma_{a,x} or by
correlator coefficients beta_{I,x_I}. Correlator terms are always read as
uniformly-averaged marginal correlators, with the empty-subset correlator
fixed to 1 (so beta for the empty subset acts as a constant offset).
Coefficients are kept as Fractions so that canonicalisation is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .correlators import (
    check_key,
    correlator_keys,
    parity,
    restrict,
    split_key,
    umc,
)
from .projection import project_l2
from .scenario import (
    BehaviorVector,
    Scenario,
    ScenarioError,
    check_outcomes,
    check_settings,
    decode_index,
    deterministic_behavior,
    deterministic_strategies,
    encode_index,
)

DIRECTIONS = ("le", "ge")
BUILTINS = ("chsh", "mermin", "tilted", "i3322", "losr_gtnl")


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float) and not math.isfinite(v):
        raise ScenarioError(f"coefficient {v!r} is not finite")
    try:
        return Fraction(v)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"cannot read coefficient {v!r}") from exc


def _norm_prob_terms(scenario, terms):
    out = {}
    for (a, x), c in terms.items():
        key = (check_outcomes(scenario, a), check_settings(scenario, x))
        out[key] = out.get(key, Fraction(0)) + _frac(c)
    return out


def _norm_corr_terms(scenario, terms):
    out = {}
    for (I, x_I), c in terms.items():
        key = split_key(check_key(scenario, I, x_I))
        out[key] = out.get(key, Fraction(0)) + _frac(c)
    return out


@dataclass(frozen=True, eq=False)
class BellExpression:
    """``sum gamma p`` and/or ``sum beta Cbar`` compared against ``bound``."""

    scenario: Scenario
    prob_terms: Mapping | None = None
    corr_terms: Mapping | None = None
    bound: Fraction = Fraction(0)
    direction: str = "le"
    name: str | None = None
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if self.prob_terms is None and self.corr_terms is None:
            raise ScenarioError("a Bell expression needs probability terms, correlator terms, or both")
        if self.direction not in DIRECTIONS:
            raise ScenarioError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if self.prob_terms is not None:
            object.__setattr__(self, "prob_terms", _norm_prob_terms(self.scenario, self.prob_terms))
        if self.corr_terms is not None:
            object.__setattr__(self, "corr_terms", _norm_corr_terms(self.scenario, self.corr_terms))
        object.__setattr__(self, "bound", _frac(self.bound))
        if self.validate and self.prob_terms is not None and self.corr_terms is not None:
            gap = self.form_disagreement()
            if gap > 1e-10:
                raise ScenarioError(f"probability and correlator forms disagree on a no-signalling point by {gap:.3e}")

    def gamma(self) -> np.ndarray:
        g = np.zeros(self.scenario.d)
        for (a, x), c in (self.prob_terms or {}).items():
            g[encode_index(self.scenario, a, x)] += float(c)
        return g

    def form_disagreement(self) -> float:
        """Largest gap between the two forms over all local deterministic points.

        These points affinely span the no-signalling hull, so a zero gap means
        the forms agree on every no-signalling behaviour.
        """
        worst = 0.0
        g = self.gamma()
        corr = BellExpression(self.scenario, corr_terms=self.corr_terms)
        for strat in deterministic_strategies(self.scenario):
            p = deterministic_behavior(self.scenario, strat)
            worst = max(worst, abs(g @ p.entries - corr_value(corr.corr_terms, p)))
        return worst

    def to_json(self) -> dict:
        terms = []
        for (a, x), c in sorted((self.prob_terms or {}).items()):
            terms.append({"kind": "prob", "a": list(a), "x": list(x), "coef": _dump_coef(c)})
        for (I, x_I), c in sorted((self.corr_terms or {}).items()):
            terms.append({"kind": "corr", "I": list(I), "xI": list(x_I), "coef": _dump_coef(c)})
        out = {"scenario": {"n": self.scenario.n, "m": self.scenario.m}, "terms": terms,
               "bound": _dump_coef(self.bound), "direction": self.direction}
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "BellExpression":
        try:
            scenario = Scenario(int(obj["scenario"]["n"]), int(obj["scenario"]["m"]))
            prob, corr = {}, {}
            for t in obj["terms"]:
                if t["kind"] == "prob":
                    key = (tuple(t["a"]), tuple(t["x"]))
                    target = prob
                elif t["kind"] == "corr":
                    key = (tuple(t["I"]), tuple(t["xI"]))
                    target = corr
                else:
                    raise ScenarioError(f"unknown term kind {t['kind']!r}")
                if key in target:
                    raise ScenarioError(f"duplicate {t['kind']} term {key}")
                target[key] = _frac(t["coef"])
            return cls(scenario, prob or None, corr or None, _frac(obj.get("bound", 0)),
                       obj.get("direction", "le"), obj.get("name"))
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed Bell expression JSON: missing or bad field {exc}") from exc


def _dump_coef(c: Fraction):
    if c.denominator == 1:
        return int(c)
    if c.denominator & (c.denominator - 1) == 0:
        return float(c)  # dyadic: exact as a double
    return f"{c.numerator}/{c.denominator}"


def corr_value(beta: Mapping, v: BehaviorVector) -> float:
    """sum beta_{I,x_I} Cbar^I_{x_I}(v) with Cbar for the empty subset taken as 1."""
    table = umc(v)
    total = 0.0
    for (I, x_I), c in beta.items():
        total += float(c) * (1.0 if not I else table[I, x_I])
    return total


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    """Correlator coefficients over all (I, x_I) and the equivalent gamma' vector."""

    scenario: Scenario
    beta: dict = field(repr=False)
    gamma: tuple = field(repr=False)
    bound: Fraction
    direction: str = "le"
    name: str | None = None

    @property
    def gamma_array(self) -> np.ndarray:
        return np.array([float(g) for g in self.gamma])

    @property
    def constant(self) -> Fraction:
        return self.beta.get(((), ()), Fraction(0))

    def block(self, x: Sequence[int]) -> tuple[Fraction, ...]:
        """gamma' restricted to setting block ``x`` (outcomes in lex order)."""
        x = check_settings(self.scenario, x)
        return tuple(self.gamma[encode_index(self.scenario, a, x)] for a in self.scenario.outcome_tuples())

    def scaled(self, factor) -> "CanonicalForm":
        """Multiply the functional and the bound by ``factor`` (> 0 keeps the direction)."""
        k = _frac(factor)
        if k == 0:
            raise ScenarioError("scale factor must be nonzero")
        direction = self.direction if k > 0 else ("ge" if self.direction == "le" else "le")
        return CanonicalForm(self.scenario, {key: c * k for key, c in self.beta.items()},
                             tuple(g * k for g in self.gamma), self.bound * k, direction, self.name)

    def absorb_constant(self) -> "CanonicalForm":
        """Move the empty-subset (constant) term into the bound."""
        c = self.constant
        if c == 0:
            return self
        beta = {k: v for k, v in self.beta.items() if k != ((), ())}
        return CanonicalForm(self.scenario, beta, _expand(self.scenario, beta), self.bound - c,
                             self.direction, self.name)

    def as_expression(self) -> BellExpression:
        prob = {decode_index(self.scenario, i): g for i, g in enumerate(self.gamma) if g != 0}
        return BellExpression(self.scenario, prob or None, dict(self.beta) or {((), ()): Fraction(0)},
                              self.bound, self.direction, self.name, validate=False)

    def to_json(self) -> dict:
        return self.as_expression().to_json()


def _expand(scenario: Scenario, beta: Mapping) -> tuple:
    """gamma'_{a,x} = sum_I beta_{I,x_I} chi_I(a) / m^(n-|I|)."""
    n, m = scenario.n, scenario.m
    gamma = [Fraction(0)] * scenario.d
    for idx in range(scenario.d):
        a, x = decode_index(scenario, idx)
        total = Fraction(0)
        for I in scenario.subsets():
            c = beta.get((I, restrict(x, I)))
            if c:
                total += c * parity(I, a) / m ** (n - len(I))
        gamma[idx] = total
    return tuple(gamma)


def canonicalize(expr: BellExpression | CanonicalForm) -> CanonicalForm:
    """Projection-invariant correlator form of a Bell expression.

    From probability coefficients:
    ``beta_{I,x_I} = 2^-n sum_a sum_{x outside I} gamma_{a,x} chi_I(a)``.
    Expressions given only in correlator form are reinterpreted over UMCs.
    """
    s = expr.scenario
    if isinstance(expr, CanonicalForm):
        prob = {decode_index(s, i): g for i, g in enumerate(expr.gamma) if g != 0}
    else:
        prob = expr.prob_terms
    beta: dict = {}
    if prob is not None:
        scale = Fraction(1, 2 ** s.n)
        subsets = s.subsets()
        for (a, x), c in prob.items():
            for I in subsets:
                key = (I, restrict(x, I))
                beta[key] = beta.get(key, Fraction(0)) + c * parity(I, a) * scale
    else:
        for key, c in expr.corr_terms.items():
            beta[key] = beta.get(key, Fraction(0)) + c
    beta = {k: v for k, v in beta.items() if v != 0}
    ordered = {}
    for key in correlator_keys(s):
        k = split_key(key)
        if k in beta:
            ordered[k] = beta[k]
    return CanonicalForm(s, ordered, _expand(s, ordered), expr.bound, expr.direction, expr.name)


class Evaluation(NamedTuple):
    value: float
    violated: bool
    margin: float


def evaluate(expr: BellExpression | CanonicalForm, v: BehaviorVector) -> Evaluation:
    """Value of the functional on ``v``; ``margin`` > 0 exactly when the bound is breached.

    Canonical forms and correlator-only expressions are evaluated over UMCs;
    expressions carrying probability terms use ``gamma . v`` as written.
    """
    if v.scenario != expr.scenario:
        raise ScenarioError(f"expression scenario {expr.scenario} does not match behaviour {v.scenario}")
    if isinstance(expr, CanonicalForm):
        value = corr_value(expr.beta, v)
    elif expr.prob_terms is not None:
        value = float(expr.gamma() @ v.entries)
    else:
        value = corr_value(expr.corr_terms, v)
    bound = float(expr.bound)
    margin = value - bound if expr.direction == "le" else bound - value
    return Evaluation(value, margin > 0, margin)


class InvarianceReport(NamedTuple):
    value_raw: float
    value_projected: float
    difference: float


def invariance_check(expr: BellExpression | CanonicalForm, v: BehaviorVector) -> InvarianceReport:
    """Evaluate before and after the L2 no-signalling projection."""
    raw = evaluate(expr, v).value
    projected = evaluate(expr, project_l2(v)).value
    return InvarianceReport(raw, projected, abs(raw - projected))


def local_bound(expr: BellExpression | CanonicalForm) -> float:
    """Extremum of the functional over all local deterministic strategies."""
    values = [evaluate(expr, deterministic_behavior(expr.scenario, st)).value
              for st in deterministic_strategies(expr.scenario)]
    return max(values) if expr.direction == "le" else min(values)


# -- library ----------------------------------------------------------------

def chsh() -> BellExpression:
    """C_00 + C_01 + C_10 - C_11 <= 2."""
    corr = {((1, 2), (x, y)): (-1) ** (x * y) for x in (0, 1) for y in (0, 1)}
    return BellExpression(Scenario(2, 2), corr_terms=corr, bound=2, name="chsh")


def mermin() -> BellExpression:
    """C_001 + C_010 + C_100 - C_111 <= 2 over three parties."""
    corr = {((1, 2, 3), (0, 0, 1)): 1, ((1, 2, 3), (0, 1, 0)): 1,
            ((1, 2, 3), (1, 0, 0)): 1, ((1, 2, 3), (1, 1, 1)): -1}
    return BellExpression(Scenario(3, 2), corr_terms=corr, bound=2, name="mermin")


def tilted(alpha=1, beta=0) -> BellExpression:
    """beta C^1_0 + sum_xy alpha^(1-x) (-1)^(xy) C_xy <= beta + 2 alpha, alpha >= 1, beta >= 0."""
    alpha, beta = _frac(alpha), _frac(beta)
    if alpha < 1 or beta < 0:
        raise ScenarioError(f"tilted CHSH needs alpha >= 1 and beta >= 0, got alpha={alpha}, beta={beta}")
    corr = {((1, 2), (x, y)): alpha ** (1 - x) * (-1) ** (x * y) for x in (0, 1) for y in (0, 1)}
    if beta:
        corr[((1,), (0,))] = beta
    return BellExpression(Scenario(2, 2), corr_terms=corr, bound=beta + 2 * alpha,
                          name=f"tilted(alpha={alpha},beta={beta})")


def i3322() -> BellExpression:
    """Correlator form of I3322 over (2,3,2), local bound 4."""
    corr = {((1,), (0,)): 1, ((1,), (1,)): 1, ((2,), (0,)): -1, ((2,), (1,)): -1}
    for (x, y), c in {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): 1, (2, 0): 1,
                      (2, 1): -1, (0, 2): 1, (1, 2): -1}.items():
        corr[((1, 2), (x, y))] = c
    return BellExpression(Scenario(2, 3), corr_terms=corr, bound=4, name="i3322")


def i3322_probability_form() -> BellExpression:
    """Collins-Gisin probability form of I3322 (<= 0).

    The single-party marginals are not well defined on signalling data; here
    they are expanded symmetrically, e.g. p_1(0|x) = (1/3) sum_y sum_b p(0b|xy).
    Kept for cross-checks; :func:`i3322` is the reference form.
    """
    s = Scenario(2, 3)
    prob: dict = {}

    def add(a, x, c):
        prob[(a, x)] = prob.get((a, x), Fraction(0)) + Fraction(c)

    def marginal1(x, c):
        for y in range(3):
            for b in (0, 1):
                add((0, b), (x, y), Fraction(c, 3))

    def marginal2(y, c):
        for x in range(3):
            for a in (0, 1):
                add((a, 0), (x, y), Fraction(c, 3))

    marginal1(0, -1)
    marginal2(0, -2)
    marginal2(1, -1)
    for (x, y), c in {(0, 0): 1, (1, 0): 1, (2, 0): 1, (0, 1): 1, (1, 1): 1,
                      (2, 1): -1, (0, 2): 1, (1, 2): -1}.items():
        add((0, 0), (x, y), c)
    return BellExpression(s, prob_terms=prob, bound=0, name="i3322-cg")


def losr_gtnl() -> BellExpression:
    """C^{12}_00 + C^{12}_01 + C_101 - C_111 + 2 C^{13}_00 <= 4 over three parties."""
    corr = {((1, 2), (0, 0)): 1, ((1, 2), (0, 1)): 1, ((1, 2, 3), (1, 0, 1)): 1,
            ((1, 2, 3), (1, 1, 1)): -1, ((1, 3), (0, 0)): 2}
    return BellExpression(Scenario(3, 2), corr_terms=corr, bound=4, name="losr_gtnl")


def builtin(name: str, **params) -> BellExpression:
    """Library lookup: chsh, mermin, tilted (alpha, beta), i3322, losr_gtnl."""
    makers = {"chsh": chsh, "mermin": mermin, "tilted": tilted, "i3322": i3322, "losr_gtnl": losr_gtnl}
    if name not in makers:
        raise ScenarioError(f"unknown built-in expression {name!r}; choose from {BUILTINS}")
    if name != "tilted" and params:
        raise ScenarioError(f"{name} takes no parameters, got {sorted(params)}")
    return makers[name](**params)


def nosig_perturbed(expr: BellExpression, row, weight) -> BellExpression:
    """Probability form of ``expr`` plus ``weight`` times a constraint row.

    Equal to ``expr`` on no-signalling behaviours but not projection invariant.
    """
    base = expr.prob_terms
    if base is None:
        base = {decode_index(expr.scenario, i): g for i, g in enumerate(canonicalize(expr).gamma) if g != 0}
    prob = dict(base)
    w = _frac(weight)
    for idx, c in row.support:
        key = decode_index(expr.scenario, idx)
        prob[key] = prob.get(key, Fraction(0)) + w * c
    return BellExpression(expr.scenario, prob_terms=prob, bound=expr.bound, direction=expr.direction,
                          name=f"{expr.name}+nosig" if expr.name else None)
