"""Command-line front end: ``nsbell {project,canonicalize,evaluate,diagnose,generate}``.

Exit codes: 0 success, 1 validation error, 2 convergence failure. Errors are
printed as a single ``error: ...`` line on stderr. Numbers on stdout carry 12
significant digits; ``--out`` artifacts are JSON at full precision.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from . import bell
from .constraints import build_constraint_system, residual
from .data import (
    CountTable,
    frequencies,
    generate_drift_counts,
    load_counts,
    load_grid222,
    signalling_report,
    write_counts,
)
from .projection import (
    ConvergenceError,
    SettingsWeights,
    estimate_ml,
    project_direct,
    project_l2,
    project_nonneg,
    project_weighted,
)
from .scenario import BehaviorVector, Scenario, ScenarioError, decode_index, uniform_behavior

METHODS = ("pipeline", "direct", "weighted", "nonneg", "ml")


class UsageError(ScenarioError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class CliConfig:
    subcommand: str
    scenario: Scenario | None
    input: str | None
    grid222: str | None
    behavior: str | None
    out: str | None
    method: str
    weights: str | None
    expr: str | None
    expr_file: str | None
    alpha: float
    beta: float
    format: str
    seed: int
    drift: float
    blocks: int
    trials: int
    mode: str

    def __post_init__(self):
        if self.method == "weighted" and self.weights is None:
            object.__setattr__(self, "weights", "from-counts")
        if self.method == "ml" and self.weights is None:
            object.__setattr__(self, "weights", "from-counts")


def _scenario(text: str) -> Scenario:
    try:
        n, m = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"scenario must look like n,m (got {text!r})") from None
    try:
        return Scenario(n, m)
    except ScenarioError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nsbell", description="No-signalling projection and canonical Bell expressions.")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def data_args(sp, required=False):
        sp.add_argument("--scenario", type=_scenario, help="n,m (default 2,2 with --grid222)")
        src = sp.add_mutually_exclusive_group(required=required)
        src.add_argument("--input", help="count CSV with header x1..xn,a1..an,count")
        src.add_argument("--grid222", help="4x4 count grid (rows xy=00..11, columns ab=00..11)")

    def expr_args(sp):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--expr", choices=bell.BUILTINS, help="built-in expression")
        g.add_argument("--expr-file", help="Bell expression JSON")
        sp.add_argument("--alpha", type=float, default=1.0, help="tilted CHSH alpha (>= 1)")
        sp.add_argument("--beta", type=float, default=0.0, help="tilted CHSH beta (>= 0)")

    sp = sub.add_parser("project", help="project counts onto the no-signalling affine hull")
    data_args(sp, required=True)
    sp.add_argument("--method", choices=METHODS, default="pipeline")
    sp.add_argument("--weights", help="uniform, from-counts or a weights JSON file")
    sp.add_argument("--out", help="write the projected behaviour JSON here")
    sp.add_argument("--format", choices=("json", "csv"), default="json")

    sp = sub.add_parser("canonicalize", help="rewrite a Bell expression over averaged marginal correlators")
    expr_args(sp)
    sp.add_argument("--out", help="write the canonical expression JSON here")

    sp = sub.add_parser("evaluate", help="evaluate a Bell expression before and after projection")
    expr_args(sp)
    data_args(sp)
    sp.add_argument("--behavior", help="behaviour JSON instead of counts")
    sp.add_argument("--method", choices=METHODS, default="pipeline")
    sp.add_argument("--weights", help="uniform, from-counts or a weights JSON file")
    sp.add_argument("--out", help="write the evaluation JSON here")

    sp = sub.add_parser("diagnose", help="report no-signalling violations in counts")
    data_args(sp)
    sp.add_argument("--behavior", help="behaviour JSON instead of counts")
    sp.add_argument("--out", help="write the full report JSON here")

    sp = sub.add_parser("generate", help="synthetic counts with drifting signalling")
    sp.add_argument("--scenario", type=_scenario, required=True)
    sp.add_argument("--behavior", help="base behaviour JSON (default: uniform)")
    sp.add_argument("--trials", type=int, default=1000, help="trials per setting")
    sp.add_argument("--drift", type=float, default=0.0)
    sp.add_argument("--blocks", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=("sample", "expected"), default="sample")
    sp.add_argument("--out", help="write the count CSV here (default stdout)")
    return p


def parse_config(argv: Sequence[str]) -> CliConfig:
    ns = build_parser().parse_args(list(argv))
    get = lambda name, default=None: getattr(ns, name, default)  # noqa: E731
    return CliConfig(
        subcommand=ns.subcommand, scenario=get("scenario"), input=get("input"), grid222=get("grid222"),
        behavior=get("behavior"), out=get("out"), method=get("method", "pipeline"), weights=get("weights"),
        expr=get("expr"), expr_file=get("expr_file"), alpha=get("alpha", 1.0), beta=get("beta", 0.0),
        format=get("format", "json"), seed=get("seed", 0), drift=get("drift", 0.0), blocks=get("blocks", 1),
        trials=get("trials", 1000), mode=get("mode", "sample"),
    )


def _g(x: float) -> str:
    return f"{x:.12g}"


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path} is not valid JSON: {exc}") from None


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ScenarioError(f"cannot write {path}: {exc.strerror}") from None


def _load_table(cfg: CliConfig) -> CountTable | None:
    if cfg.grid222:
        if cfg.scenario is not None and cfg.scenario != Scenario(2, 2):
            raise ScenarioError(f"--grid222 is a (2,2,2) format but --scenario is {cfg.scenario}")
        with _open(cfg.grid222) as fh:
            return load_grid222(fh)
    if cfg.input:
        if cfg.scenario is None:
            raise ScenarioError("--scenario n,m is required with --input")
        with _open(cfg.input) as fh:
            return load_counts(fh, cfg.scenario)
    return None


def _open(path: str):
    try:
        return open(path, newline="")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None


def _weights(cfg: CliConfig, scenario: Scenario, pi: SettingsWeights | None) -> SettingsWeights:
    src = cfg.weights or "from-counts"
    if src == "uniform":
        return SettingsWeights.uniform(scenario)
    if src == "from-counts":
        if pi is None:
            raise ScenarioError("--weights from-counts needs count data (--input or --grid222)")
        return pi
    w = SettingsWeights.from_json(_read_json(src))
    if w.scenario != scenario:
        raise ScenarioError(f"weights file is for {w.scenario}, data is {scenario}")
    return w


def _project(cfg: CliConfig, f: BehaviorVector, pi: SettingsWeights | None) -> BehaviorVector:
    if cfg.method == "pipeline":
        return project_l2(f)
    if cfg.method == "direct":
        return project_direct(f)
    if cfg.method == "weighted":
        return project_weighted(f, _weights(cfg, f.scenario, pi))
    if cfg.method == "nonneg":
        return project_nonneg(f)
    return estimate_ml(f, _weights(cfg, f.scenario, pi))


def _data(cfg: CliConfig, default: Scenario | None = None) -> tuple[BehaviorVector, SettingsWeights | None]:
    if cfg.behavior and (cfg.input or cfg.grid222):
        raise ScenarioError("give either --behavior or count data, not both")
    if cfg.behavior:
        v = BehaviorVector.from_json(_read_json(cfg.behavior))
        if cfg.scenario is not None and cfg.scenario != v.scenario:
            raise ScenarioError(f"behaviour is for {v.scenario} but --scenario is {cfg.scenario}")
        return v, None
    if cfg.scenario is None and default is not None and cfg.input:
        cfg = replace(cfg, scenario=default)
    table = _load_table(cfg)
    if table is None:
        raise ScenarioError("no data: give --input, --grid222 or --behavior")
    return frequencies(table)


def _expression(cfg: CliConfig) -> bell.BellExpression:
    if cfg.expr_file:
        return bell.BellExpression.from_json(_read_json(cfg.expr_file))
    if cfg.expr == "tilted":
        return bell.builtin("tilted", alpha=cfg.alpha, beta=cfg.beta)
    return bell.builtin(cfg.expr)


def cmd_project(cfg: CliConfig, out) -> None:
    f, pi = _data(cfg)
    p = _project(cfg, f, pi)
    res = residual(build_constraint_system(p.scenario), p)
    print(f"scenario: {p.scenario}", file=out)
    print(f"method: {cfg.method}", file=out)
    print(f"max |nosig residual|: {_g(res.max_nosig)}", file=out)
    print(f"max |norm residual|: {_g(res.max_norm)}", file=out)
    print(f"min entry: {_g(float(p.entries.min()))}", file=out)
    print(f"negative entries: {'yes' if p.has_negative else 'no'}", file=out)
    if cfg.out:
        if cfg.format == "json":
            obj = p.to_json()
            obj["method"] = cfg.method
            obj["residual"] = res.summary()
            _write(cfg.out, json.dumps(obj, indent=2) + "\n")
        else:
            lines = [",".join([f"x{i}" for i in range(1, p.scenario.n + 1)]
                              + [f"a{i}" for i in range(1, p.scenario.n + 1)] + ["p"])]
            for idx, val in enumerate(p.entries):
                a, x = decode_index(p.scenario, idx)
                lines.append(",".join(str(v) for v in (*x, *a)) + f",{val!r}")
            _write(cfg.out, "\n".join(lines) + "\n")


def cmd_canonicalize(cfg: CliConfig, out) -> None:
    expr = _expression(cfg)
    c = bell.canonicalize(expr)
    print(f"scenario: {c.scenario}", file=out)
    print(f"bound: {_g(float(c.bound))} ({c.direction})", file=out)
    for (I, x_I), coef in c.beta.items():
        label = "const" if not I else f"Cbar^{{{','.join(map(str, I))}}}_{''.join(map(str, x_I))}"
        print(f"  {label}: {coef}", file=out)
    print("blocks (outcomes in lex order):", file=out)
    for x in c.scenario.setting_tuples():
        print(f"  x={''.join(map(str, x))}: " + " ".join(str(v) for v in c.block(x)), file=out)
    if cfg.out:
        _write(cfg.out, json.dumps(c.to_json(), indent=2) + "\n")


def cmd_evaluate(cfg: CliConfig, out) -> None:
    expr = _expression(cfg)
    # count files carry no scenario header; fall back to the expression's
    f, pi = _data(cfg, expr.scenario)
    if f.scenario != expr.scenario:
        raise ScenarioError(f"expression is for {expr.scenario} but data is {f.scenario}")
    canon = bell.canonicalize(expr)
    p = _project(cfg, f, pi)
    raw, proj = bell.evaluate(canon, f), bell.evaluate(canon, p)
    print(f"expression: {expr.name or cfg.expr_file}", file=out)
    print(f"bound: {_g(float(expr.bound))} ({expr.direction})", file=out)
    for tag, ev in (("raw", raw), (f"projected ({cfg.method})", proj)):
        flag = "violated" if ev.violated else "not violated"
        print(f"{tag}: value {_g(ev.value)} margin {_g(ev.margin)} {flag}", file=out)
    if cfg.out:
        obj = {"expression": expr.name, "bound": float(expr.bound), "direction": expr.direction,
               "method": cfg.method,
               "raw": raw._asdict(), "projected": proj._asdict()}
        _write(cfg.out, json.dumps(obj, indent=2) + "\n")


def cmd_diagnose(cfg: CliConfig, out) -> None:
    f, _ = _data(cfg)
    report = signalling_report(f)
    print(f"scenario: {f.scenario}", file=out)
    print(report.summary(), file=out)
    if cfg.out:
        _write(cfg.out, json.dumps(report.to_json(), indent=2) + "\n")


def cmd_generate(cfg: CliConfig, out) -> None:
    s = cfg.scenario
    base = BehaviorVector.from_json(_read_json(cfg.behavior)) if cfg.behavior else uniform_behavior(s)
    if base.scenario != s:
        raise ScenarioError(f"base behaviour is for {base.scenario} but --scenario is {s}")
    table = generate_drift_counts(base, cfg.trials, cfg.drift, cfg.blocks, cfg.seed, mode=cfg.mode)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            write_counts(table, fh)
        print(f"wrote {table.total} trials for {s} to {cfg.out}", file=out)
    else:
        write_counts(table, out)


COMMANDS = {"project": cmd_project, "canonicalize": cmd_canonicalize, "evaluate": cmd_evaluate,
            "diagnose": cmd_diagnose, "generate": cmd_generate}


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        COMMANDS[cfg.subcommand](cfg, out)
    except ConvergenceError as exc:
        print(f"error: {' '.join(str(exc).split())}", file=err)
        return 2
    except (ScenarioError, ArithmeticError) as exc:
        print(f"error: {' '.join(str(exc).split())}", file=err)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
