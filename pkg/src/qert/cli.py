"""Command-line interface: ``qert parse | analyze | check-invariant | simulate | bb84``.

Exit codes: 0 success, 2 invalid input (syntax, elaboration, state, cost or
invariant files, bad arguments), 3 an evaluator did not converge, 4 a BB84
verification check failed.  With ``--json`` the report goes to stdout as one
JSON document; wall-clock timings are kept under ``wall_time`` so the rest of
the report is reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bb84
from .ert import (UNIT, Affine, CostModel, ErtOptions, LoopInBody, MissingCost, RuntimeExpr,
                  check_invariant, ert_affine_form, ert_backward, ert_forward)
from .ert.evaluators import Heisenberg
from .frontend import QgclError, While, load, parse, pretty
from .frontend.syntax import contains_loop, flatten, seq
from .operators import OperatorError, PartialDensityMatrix
from .trajectory import TrajectoryConfig, simulate, summarize

SCHEMA = 1
EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_BB84 = 0, 2, 3, 4


class UsageError(Exception):
    """Bad input detected by the CLI itself; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INVALID)


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _read_program(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    return text, load(text)


def _load_cost(path: str | None) -> CostModel:
    if path is None:
        return UNIT
    try:
        return CostModel.load(path)
    except (OSError, ValueError, TypeError) as e:
        raise UsageError(f"bad cost model {path}: {e}") from None


def _seed(args) -> int:
    env = os.environ.get("QERT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"QERT_SEED must be an integer, got {env!r}") from None
    return args.seed


def _matrix_from_json(data) -> np.ndarray:
    rows = data["matrix"] if isinstance(data, dict) else data
    return np.array([[complex(*z) if isinstance(z, list) else complex(z) for z in row] for row in rows],
                    dtype=complex)


def _matrix_to_json(a: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(a)]


_KET = re.compile(r"^\|([^>]*)>$")


def parse_state(spec: str, layout) -> PartialDensityMatrix:
    """``zero``, a basis ket (``|0,1,3>`` in layout order or ``k=1,B=0``) or a JSON file."""
    spec = spec.strip()
    if spec == "zero":
        return PartialDensityMatrix.basis(layout)
    m = _KET.match(spec)
    if m or ("=" in spec and not os.path.exists(spec)):
        values = {}
        if m:
            parts = [p for p in re.split(r"[,\s]+", m.group(1)) if p]
            if len(parts) != len(layout.names):
                raise UsageError(f"ket {spec} needs {len(layout.names)} values ({', '.join(layout.names)})")
            pairs = zip(layout.names, parts)
        else:
            pairs = [p.split("=", 1) for p in spec.split(",")]
        for name, val in pairs:
            name = name.strip()
            if name not in layout.names:
                raise UsageError(f"unknown variable {name!r} in state {spec}")
            try:
                values[name] = int(val)
            except ValueError:
                raise UsageError(f"basis value for {name!r} must be an integer, got {val!r}") from None
            if not 0 <= values[name] < layout.dim(name):
                raise UsageError(f"basis value {values[name]} out of range for {name!r}")
        return PartialDensityMatrix.basis(layout, values)
    try:
        data = json.loads(Path(spec).read_text(encoding="utf-8"))
        mat = _matrix_from_json(data)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise UsageError(f"cannot read state {spec}: {e}") from None
    if mat.shape != (layout.total_dim, layout.total_dim):
        raise UsageError(f"state has shape {mat.shape}, expected ({layout.total_dim}, {layout.total_dim})")
    rho = PartialDensityMatrix(mat, layout)
    problems = rho.violations()
    if problems:
        raise UsageError("state is not a partial density matrix: " + "; ".join(problems))
    return rho


def _base_report(command: str, text: str | None, cost: CostModel | None, seed: int | None) -> dict:
    return {
        "schema": SCHEMA,
        "command": command,
        "version": __version__,
        "program_hash": None if text is None else _sha(text.encode()),
        "cost_hash": None if cost is None else cost.digest(),
        "seed": seed,
    }


def _emit(report: dict, as_json: bool, lines: list[str], out) -> None:
    if as_json:
        out.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    else:
        out.write("\n".join(lines) + "\n")


# -- parse

def cmd_parse(args, out) -> int:
    try:
        text = Path(args.program).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {args.program}: {e.strerror}") from None
    src = parse(text)
    if args.check:
        load(text)
    report = _base_report("parse", text, None, None)
    report["ast"] = pretty(src)
    _emit(report, args.json, [pretty(src).rstrip("\n")], out)
    return EXIT_OK


# -- analyze

def _options(args) -> ErtOptions:
    if args.epsilon <= 0:
        raise UsageError("--epsilon must be positive")
    if args.max_unroll < 1:
        raise UsageError("--max-unroll must be at least 1")
    return ErtOptions(epsilon_value=args.epsilon, max_unroll=args.max_unroll, max_iterations=args.max_unroll)


def cmd_analyze(args, out) -> int:
    text, prog = _read_program(args.program)
    cost = _load_cost(args.cost)
    opts = _options(args)
    rho = parse_state(args.state, prog.layout)
    report = _base_report("analyze", text, cost, None)
    report["state"] = args.state
    report["mode"] = args.mode
    evaluators, wall, lines, converged = {}, {}, [], True

    if args.mode in ("backward", "both"):
        t0 = time.perf_counter()
        b = ert_backward(prog, None, rho, cost, opts)
        wall["backward"] = time.perf_counter() - t0
        evaluators["backward"] = {
            "value": b.value, "converged": b.converged, "lower_bound": b.lower_bound,
            "loops": [{"label": r.label, "line": r.line, "iterations": r.iterations, "converged": r.converged}
                      for r in b.loops],
        }
        converged &= b.converged
        lines.append(f"backward: {b.value!r}" + ("" if b.converged else " (lower bound, not converged)"))
    if args.mode in ("forward", "both"):
        t0 = time.perf_counter()
        f = ert_forward(prog, rho, None, cost, opts)
        wall["forward"] = time.perf_counter() - t0
        evaluators["forward"] = {
            "value": f.value, "converged": f.converged, "lower_bound": not f.converged,
            "residual_mass": f.residual_mass, "loop_iterations": list(f.iterations),
        }
        converged &= f.converged
        lines.append(f"forward:  {f.value!r}" + ("" if f.converged else
                                                 f" (lower bound, residual mass {f.residual_mass:.3g})"))
    if args.mode == "affine":
        t0 = time.perf_counter()
        try:
            form = ert_affine_form(prog, None, cost)
        except LoopInBody as e:
            raise UsageError(f"affine mode: {e}") from None
        wall["affine"] = time.perf_counter() - t0
        value = form(np.asarray(rho.matrix))
        evaluators["affine"] = {"value": value, "converged": True, "lower_bound": False,
                                "expression": form.to_expr().to_json()}
        lines.append(f"affine:   {value!r}")

    values = [e["value"] for e in evaluators.values()]
    report["evaluators"] = evaluators
    report["value"] = values[0]
    report["converged"] = converged
    if "backward" in evaluators and "forward" in evaluators:
        report["difference"] = abs(evaluators["backward"]["value"] - evaluators["forward"]["value"])
    report["notes"] = list(prog.notes)
    report["wall_time"] = wall
    lines.append("converged" if converged else "NOT converged: reported values are lower bounds")
    _emit(report, args.json, lines, out)
    return EXIT_OK if converged else EXIT_DIVERGED


# -- check-invariant

def _select_loop(prog, index: int):
    """The ``index``-th top-level loop, with the runtime of everything after it as continuation."""
    stmts = flatten(prog.program)
    loops = [i for i, s in enumerate(stmts) if isinstance(s, While)]
    if not loops:
        raise UsageError("program has no top-level while loop")
    if not 0 <= index < len(loops):
        raise UsageError(f"--loop {index} out of range: program has {len(loops)} top-level loop(s)")
    pos = loops[index]
    return stmts[pos], stmts[pos + 1:]


def cmd_check_invariant(args, out) -> int:
    text, prog = _read_program(args.program)
    cost = _load_cost(args.cost)
    seed = _seed(args)
    try:
        inv = RuntimeExpr.load(args.invariant).validate(prog.layout)
    except (OSError, ValueError, KeyError, TypeError, OperatorError) as e:
        raise UsageError(f"bad invariant {args.invariant}: {e}") from None
    loop, rest = _select_loop(prog, args.loop)
    opts = ErtOptions()
    if rest:
        t = Heisenberg(prog, cost, opts).transform(seq(*rest), Affine.zero(prog.layout.total_dim))
    else:
        t = None
    mode, warnings = args.mode, []
    if mode == "exact" and contains_loop(loop.body):
        warnings.append("loop body contains a loop: exact mode unavailable, using sample mode")
        mode = "sample"
    t0 = time.perf_counter()
    verdict = check_invariant(prog, loop, t, inv, mode, cost, opts, seed=seed)
    elapsed = time.perf_counter() - t0
    report = _base_report("check-invariant", text, cost, seed)
    report.update({
        "loop": {"label": loop.label, "line": loop.pos.line, "index": args.loop},
        "invariant_hash": _sha(json.dumps(inv.to_json(), sort_keys=True).encode()),
        "mode": mode,
        "status": verdict.status,
        "margin": verdict.margin,
        "detail": verdict.detail,
        "witness": None if verdict.witness is None else {"matrix": _matrix_to_json(verdict.witness.matrix)},
        "warnings": warnings,
        "wall_time": {"check": elapsed},
    })
    lines = [f"warning: {w}" for w in warnings]
    lines.append(f"{verdict.status} (margin {verdict.margin!r}, {mode} mode): {verdict.detail}")
    if verdict.witness is not None:
        lines.append("witness: " + json.dumps(report["witness"]))
    _emit(report, args.json, lines, out)
    return EXIT_OK


# -- simulate

def cmd_simulate(args, out) -> int:
    text, prog = _read_program(args.program)
    cost = _load_cost(args.cost)
    seed = _seed(args)
    rho = parse_state(args.state, prog.layout)
    try:
        config = TrajectoryConfig(trials=args.trials, seed=seed, max_steps=args.max_steps)
    except ValueError as e:
        raise UsageError(str(e)) from None
    t0 = time.perf_counter()
    trials = simulate(prog, rho, config, cost)
    est = summarize(trials.cost, trials.truncated)
    elapsed = time.perf_counter() - t0
    warnings = []
    if est.truncated_trials:
        share = 100.0 * est.truncated_trials / est.trials
        warnings.append(f"{est.truncated_trials} of {est.trials} trials ({share:.4g}%) hit --max-steps "
                        f"{args.max_steps}; their partial costs are included in the mean")
    if args.histogram:
        Path(args.histogram).write_text(est.histogram_csv(), encoding="utf-8")
    report = _base_report("simulate", text, cost, seed)
    report.update({
        "state": args.state,
        "trials": est.trials,
        "max_steps": args.max_steps,
        "mean": est.mean,
        "std_error": est.std_error,
        "truncated_trials": est.truncated_trials,
        "histogram": [[c, n] for c, n in est.histogram],
        "warnings": warnings,
        "wall_time": {"simulate": elapsed},
    })
    lines = [f"warning: {w}" for w in warnings]
    lines.append(f"mean {est.mean!r} ± {est.std_error!r} (std error, {est.trials} trials, "
                 f"{est.truncated_trials} truncated)")
    _emit(report, args.json, lines, out)
    return EXIT_OK


# -- bb84

def cmd_bb84(args, out) -> int:
    if not 1 <= args.m < args.dim:
        raise UsageError(f"BB84 needs 1 <= m < dim, got m={args.m}, dim={args.dim}")
    cost = _load_cost(args.cost)
    seed = _seed(args)
    if args.trials < 0:
        raise UsageError("--trials must be non-negative")
    text = bb84.source(args.m, args.dim)
    if args.emit:
        Path(args.emit).write_text(text, encoding="utf-8")
    inst = bb84.build(args.m, args.dim)
    try:
        rep = bb84.verify(inst, cost, trials=args.trials, seed=seed)
    except MissingCost as e:
        raise UsageError(str(e)) from None
    report = _base_report("bb84", text, cost, seed)
    report.update({
        "m": args.m,
        "dim": args.dim,
        "closed_form": rep.closed_form,
        "passed": rep.passed,
        "checks": [{"name": c.name, "passed": c.passed, "value": c.value, "expected": c.expected,
                    "detail": c.detail} for c in rep.checks],
        "wall_time": dict(rep.timings),
    })
    lines = [f"BB84 m={args.m} dim={args.dim}: closed form {rep.closed_form!r}"]
    for c in rep.checks:
        lines.append(f"  {'ok  ' if c.passed else 'FAIL'} {c.name}: {c.value!r} (expected {c.expected!r})"
                     + (f" {c.detail}" if c.detail else ""))
    lines.append("PASS" if rep.passed else "FAIL")
    _emit(report, args.json, lines, out)
    return EXIT_OK if rep.passed else EXIT_BB84


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qert", description="Expected-runtime analysis of qGCL programs.")
    p.add_argument("--version", action="version", version=f"qert {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=False, state=False):
        sp.add_argument("--json", action="store_true", help="print a JSON report")
        sp.add_argument("--cost", help="cost model JSON file (default: every step costs 1)")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="RNG seed (QERT_SEED overrides)")
        if state:
            sp.add_argument("--state", default="zero",
                            help="initial state: zero, a basis ket like '|0,1>' or 'q=1', or a JSON file")

    sp = sub.add_parser("parse", help="parse a program and print its syntax tree")
    sp.add_argument("program")
    sp.add_argument("--check", action="store_true", help="also run the static checks")
    sp.add_argument("--json", action="store_true", help="print a JSON report")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("analyze", help="expected runtime of a program")
    sp.add_argument("program")
    common(sp, state=True)
    sp.add_argument("--mode", choices=("both", "backward", "forward", "affine"), default="both")
    sp.add_argument("--epsilon", type=float, default=ErtOptions().epsilon_value,
                    help="stop unrolling a loop once an iterate adds less than this")
    sp.add_argument("--max-unroll", type=int, default=ErtOptions().max_unroll)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("check-invariant", help="check a runtime invariant of a loop")
    sp.add_argument("program")
    sp.add_argument("--invariant", required=True, help="invariant JSON file")
    sp.add_argument("--mode", choices=("exact", "sample"), default="exact")
    sp.add_argument("--loop", type=int, default=0, help="which top-level loop (0-based)")
    common(sp, seed=True)
    sp.set_defaults(func=cmd_check_invariant)

    sp = sub.add_parser("simulate", help="Monte Carlo runtime estimate")
    sp.add_argument("program")
    common(sp, seed=True, state=True)
    sp.add_argument("--trials", type=int, default=TrajectoryConfig().trials)
    sp.add_argument("--max-steps", type=int, default=TrajectoryConfig().max_steps)
    sp.add_argument("--histogram", help="write the cost histogram as CSV to this file")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bb84", help="verify the BB84 case study")
    sp.add_argument("--m", type=int, default=1, help="key length")
    sp.add_argument("--dim", type=int, default=None, help="counter levels (default m + 2)")
    common(sp, seed=True)
    sp.add_argument("--trials", type=int, default=10_000, help="Monte Carlo trials (0 to skip)")
    sp.add_argument("--emit", help="also write the generated program to this file")
    sp.set_defaults(func=cmd_bb84, seed=42)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    if getattr(args, "dim", 0) is None:
        args.dim = args.m + 2
    try:
        return args.func(args, out)
    except QgclError as e:
        diags = [d.to_dict() for d in e.diagnostics]
        if getattr(args, "json", False):
            out.write(json.dumps({"schema": SCHEMA, "command": args.command, "version": __version__,
                                  "diagnostics": diags}, indent=2, sort_keys=True) + "\n")
        for d in e.diagnostics:
            print(f"{getattr(args, 'program', '<bb84>')}:{d.line}:{d.col}: {d.severity}: {d.code}: {d.message}",
                  file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, MissingCost, OperatorError) as e:
        if getattr(args, "json", False):
            out.write(json.dumps({"schema": SCHEMA, "command": args.command, "version": __version__,
                                  "diagnostics": [{"severity": "error", "line": 0, "col": 0,
                                                   "code": "E_USAGE", "message": str(e)}]},
                                 indent=2, sort_keys=True) + "\n")
        print(f"qert: error: {e}", file=sys.stderr)
        return EXIT_INVALID


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
