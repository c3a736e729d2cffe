# main.py: LTLfMT tableau solver command line
"""
Subcommands:
  solve FILE               decide satisfiability with the one-pass tableau
  classify FILE            report decidable-fragment membership (--check-bl K)
  bmc FILE N               bounded model search over lengths 1..N
  check-trace FILE TRACE   evaluate the formula on a trace file

Exit codes: 10 SAT / trace holds, 20 UNSAT / trace fails, 30 unknown, 1 error.
Results go to stdout, logs to stderr.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import pandas as pd
import z3
from dotenv import load_dotenv

from analysis.fragments import classify
from analysis.semantics import EvaluationError, bounded_sweep, holds
from analysis.traces import TraceFormatError, format_value, read_trace, write_trace
from logic.parser import ParseError, load_problem
from logic.syntax import RESERVED_PREFIX, SortError
from smt.fourier_motzkin import DnfBlowup, McPreconditionError
from smt.session import DEFAULT_TIMEOUT_MS, QEFailure, SmtTransportError
from tableau.dot_export import export_dot
from tableau.engine import (
    Satisfiable, TableauConfig, TableauError, Unsatisfiable, solve,
)

log = logging.getLogger("LTLfMT")

EXIT_SAT, EXIT_UNSAT, EXIT_UNKNOWN, EXIT_ERROR = 10, 20, 30, 1
ERRORS = (
    ParseError, SortError, TraceFormatError, EvaluationError, SmtTransportError,
    QEFailure, TableauError, McPreconditionError, DnfBlowup, z3.Z3Exception, ValueError, OSError,
)


class ConfigError(ValueError):
    """Invalid option value on the command line, in a problem file or in the environment."""


@dataclass
class Config:
    subcommand: str
    problem: Path
    theory: str | None = None
    prune: bool = True
    max_steps: int = 64
    node_budget: int = 1_000_000
    solver_cmd: str | None = None
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    dump_tableau: Path | None = None
    witness: bool = False
    json_output: bool = False
    workers: int = 1
    stats: bool = False
    check_bl: int | None = None
    bound: int | None = None
    trace: Path | None = None

    def tableau(self):
        return TableauConfig(
            prune=self.prune,
            max_steps=self.max_steps,
            node_budget=self.node_budget,
            timeout_ms=self.timeout_ms,
            solver_cmd=self.solver_cmd,
            workers=self.workers,
        )


# ============================================================================
# CONFIGURATION
# ============================================================================
def _switch(key, value):
    if value in ("on", "true", "yes", "1"):
        return True
    if value in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"option {key} expects on/off, got '{value}'")


def _count(key, value, minimum=1):
    try:
        number = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"option {key} expects an integer, got '{value}'") from None
    if number < minimum:
        raise ConfigError(f"option {key} must be at least {minimum}")
    return number


OPTION_PARSERS = {
    "prune": _switch,
    "max_steps": _count,
    "node_budget": _count,
    "timeout_ms": _count,
    "workers": _count,
}


def resolve_config(args, options):
    """
    Merge CLI flags, problem-file options, environment and defaults, in that
    order of precedence.
    """
    config = Config(args.command, Path(args.problem))

    env = {}
    if os.environ.get("LTLFMT_SOLVER"):
        env["solver_cmd"] = os.environ["LTLFMT_SOLVER"]
    if os.environ.get("LTLFMT_TIMEOUT_MS"):
        env["timeout_ms"] = _count("LTLFMT_TIMEOUT_MS", os.environ["LTLFMT_TIMEOUT_MS"])

    from_file = {}
    for key, value in options.items():
        if key not in OPTION_PARSERS:
            raise ConfigError(f"unknown option '{key}' in problem file")
        from_file[key] = OPTION_PARSERS[key](key, value)

    from_cli = {
        key: getattr(args, key, None)
        for key in ("prune", "max_steps", "node_budget", "timeout_ms", "workers", "solver_cmd")
    }
    for key in ("max_steps", "node_budget", "timeout_ms", "workers"):
        if from_cli[key] is not None:
            _count(f"--{key.replace('_', '-')}", from_cli[key])

    for layer in (env, from_file, {k: v for k, v in from_cli.items() if v is not None}):
        for key, value in layer.items():
            setattr(config, key, value)

    config.theory = args.theory
    config.dump_tableau = Path(args.dump_tableau) if getattr(args, "dump_tableau", None) else None
    config.witness = args.witness
    config.json_output = args.json
    config.stats = args.stats
    config.check_bl = getattr(args, "check_bl", None)
    config.bound = getattr(args, "bound", None)
    config.trace = Path(args.trace) if getattr(args, "trace", None) else None
    if config.check_bl is not None and config.check_bl < 0:
        raise ConfigError("--check-bl expects a non-negative k")
    if config.bound is not None and config.bound < 1:
        raise ConfigError("bmc bound must be at least 1")
    return config


# ============================================================================
# OUTPUT
# ============================================================================
def witness_rows(run):
    names = [n for n in run.signature.var_names if not n.startswith(RESERVED_PREFIX)]
    return [{n: format_value(state[n]) for n in names} for state in run.states]


def stats_frame(stats):
    rows = [{"statistic": k, "value": v} for k, v in stats.items() if not k.endswith("_seconds")]
    return pd.DataFrame(rows, columns=["statistic", "value"])


def emit(config, text, payload):
    if config.json_output:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


# ============================================================================
# SUBCOMMANDS
# ============================================================================
def run_solve(config, problem):
    log.info("Stage 2: building tableau...")
    outcome, tableau = solve(problem.formula, problem.signature, config.tableau())
    stats = {k: v for k, v in tableau.stats().items() if not k.endswith("_seconds")}
    witness = outcome.witness if isinstance(outcome, Satisfiable) else None

    if config.dump_tableau is not None:
        path = export_dot(tableau, config.dump_tableau, witness)
        log.info("Stage 3: tableau written to %s", path)

    if isinstance(outcome, Satisfiable):
        verdict, code, reason = "SAT", EXIT_SAT, None
    elif isinstance(outcome, Unsatisfiable):
        verdict, code, reason = "UNSAT", EXIT_UNSAT, None
    else:
        verdict, code, reason = "UNKNOWN", EXIT_UNKNOWN, outcome.reason

    text = verdict if reason is None else f"{verdict} ({reason.replace('-', ' ')})"
    if witness is not None and config.witness:
        text += "\n" + write_trace(witness).rstrip("\n")
    if config.stats:
        text += "\n" + stats_frame(stats).to_string(index=False)
    payload = {
        "verdict": verdict,
        "witness": witness_rows(witness) if witness is not None else None,
        "trace": write_trace(witness) if witness is not None else None,
        "stats": stats,
    }
    if reason is not None:
        payload["reason"] = reason
    emit(config, text, payload)
    return code


def run_classify(config, problem):
    log.info("Stage 2: classifying formula...")
    report = classify(problem.formula, problem.signature, check_bl=config.check_bl,
                      timeout_ms=config.timeout_ms)
    text = report.to_frame().to_string(index=False)
    if report.bl is not None:
        text += "\n" + str(report.bl)
    emit(config, text, report.to_dict())
    return 0


def run_bmc(config, problem):
    log.info("Stage 2: bounded model search up to length %d...", config.bound)
    sweep, found = bounded_sweep(problem.formula, problem.signature, config.bound,
                                 solver_cmd=config.solver_cmd, timeout_ms=config.timeout_ms)
    table = sweep[["length", "outcome", "reason"]]
    if found is not None:
        verdict, code = f"SAT (length {len(found.run)})", EXIT_SAT
    elif (sweep["outcome"] == "INCONCLUSIVE").any():
        verdict, code = f"UNKNOWN (inconclusive up to length {config.bound})", EXIT_UNKNOWN
    else:
        verdict, code = f"UNSAT (no model up to length {config.bound})", EXIT_UNSAT
    text = table.to_string(index=False) + "\n" + verdict
    if found is not None and config.witness:
        text += "\n" + write_trace(found.run).rstrip("\n")
    payload = {
        "verdict": verdict.split(" ", 1)[0],
        "witness": witness_rows(found.run) if found is not None else None,
        "trace": write_trace(found.run) if found is not None else None,
        "lengths": table.to_dict(orient="records"),
    }
    emit(config, text, payload)
    return code


def run_check_trace(config, problem):
    log.info("Stage 2: evaluating formula on %s...", config.trace)
    run = read_trace(config.trace.read_text(encoding="utf-8"), problem.signature)
    result = holds(run, 0, problem.formula, timeout_ms=config.timeout_ms)
    text = "HOLDS" if result else "DOES NOT HOLD"
    emit(config, text, {"holds": result, "length": len(run)})
    return EXIT_SAT if result else EXIT_UNSAT


SUBCOMMANDS = {
    "solve": run_solve,
    "classify": run_classify,
    "bmc": run_bmc,
    "check-trace": run_check_trace,
}


# ============================================================================
# ARGUMENTS
# ============================================================================
def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem", help="Problem file (.ltlfmt)")
    common.add_argument("--theory", choices=["LRA", "LIA", "EUF"], help="Override the problem's theory")
    common.add_argument("--solver-cmd", help="External SMT-LIB solver command (default: in-process z3)")
    common.add_argument("--timeout", dest="timeout_ms", type=int, help="Per-query timeout in ms (default 5000)")
    common.add_argument("--witness", action="store_true", help="Print the witness trace on SAT")
    common.add_argument("--json", action="store_true", help="Machine-readable output")
    common.add_argument("--stats", action="store_true", help="Print search statistics")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")

    parser = argparse.ArgumentParser(prog="ltlfmt", description="LTLf modulo theories tableau solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="Decide satisfiability")
    p.add_argument("--no-prune", dest="prune", action="store_const", const=False, help="Disable the PRUNE rule")
    p.add_argument("--max-steps", type=int, help="Bound on poised nodes per branch (default 64)")
    p.add_argument("--node-budget", type=int, help="Bound on tableau nodes (default 1000000)")
    p.add_argument("--dump-tableau", metavar="PATH", help="Write the tableau in dot format")
    p.add_argument("--workers", type=int, help="Threads evaluating poised nodes (default 1)")

    p = sub.add_parser("classify", parents=[common], help="Report fragment membership")
    p.add_argument("--check-bl", type=int, metavar="K", help="Also decide K-bounded lookback")

    p = sub.add_parser("bmc", parents=[common], help="Bounded model search")
    p.add_argument("bound", type=int, help="Largest trace length to try")

    p = sub.add_parser("check-trace", parents=[common], help="Evaluate the formula on a trace")
    p.add_argument("trace", help="Trace file")
    return parser


def configure_logging(verbosity):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def diagnostic(exc, source):
    if isinstance(exc, (ParseError, SortError)) and getattr(exc, "line", None) is not None:
        message = exc.message if isinstance(exc, ParseError) else str(exc).split(": ", 1)[-1]
        return f"error: {source}:{exc.line}:{exc.column}: {message}"
    return f"error: {source}: {exc}"


def run(argv=None):
    """Entry point; returns the process exit code."""
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else 0
    configure_logging(args.verbose)

    source = args.problem
    try:
        log.info("=== LTLfMT %s ===", args.command)
        log.info("Stage 1: parsing %s...", source)
        problem = load_problem(Path(source).read_text(encoding="utf-8"), theory_override=args.theory)
        config = resolve_config(args, problem.options)
        code = SUBCOMMANDS[config.subcommand](config, problem)
    except ERRORS as exc:
        if isinstance(exc, TraceFormatError):
            source = args.trace
        print(diagnostic(exc, source), file=sys.stderr)
        return EXIT_ERROR
    log.info("=== done (exit %d) ===", code)
    return code


if __name__ == "__main__":
    sys.exit(run())
