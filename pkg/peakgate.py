#!/usr/bin/env python3
"""
peakgate - exact peak computation for discrete-time systems
Subcommands: solve, reproduce, orbit, ratio
"""

import argparse
import math
import sys
from typing import List, Optional

import pandas as pd
from loguru import logger

from config import Settings, settings
from constants import (
    EXIT_CODE_DESCRIPTION,
    TABLE_SIGNIFICANT_DIGITS,
    ExitCode,
    OutputFormat,
    RatioMode,
)
from errors import ConfigError, PeakgateError, ReproductionMismatchError
from models import RatioReport, ReproductionReport, SolveReport, load_config
from peak_service import PeakService
from reproduction import reproduce
from systems import write_orbit_csv

TEXT_LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} - {name} - {level} - {message}"
INFINITE_TRACE_COLUMNS = ["f_value", "k_after"]


def configure_logging(current: Settings) -> None:
    """Send diagnostics to stderr; stdout carries reports only"""
    logger.remove()
    serialize = current.log_format == "json"
    logger.add(sys.stderr, level=current.log_level, format=TEXT_LOG_FORMAT, serialize=serialize)
    if current.log_file:
        logger.add(
            current.log_file,
            level=current.log_level,
            format=TEXT_LOG_FORMAT,
            serialize=serialize,
            rotation=current.log_rotation,
        )


class PeakgateArgumentParser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1)"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"usage error: {message}")


def add_run_flags(parser: argparse.ArgumentParser, default=None) -> None:
    """--format/--seed/--tol/--guard, accepted before or after the subcommand"""
    fmt_default = OutputFormat.TABLE.value if default is None else default
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], default=fmt_default)
    parser.add_argument("--seed", type=int, default=default, help="sampling seed (default from PEAKGATE_SEED or 0)")
    parser.add_argument("--tol", type=float, default=default, help="absolute comparison tolerance")
    parser.add_argument("--guard", type=int, default=default, help="rank limit while no term exceeds h(0)")


def build_parser() -> argparse.ArgumentParser:
    # after the subcommand, an unset flag must not hide one given before it
    common = PeakgateArgumentParser(add_help=False)
    add_run_flags(common, default=argparse.SUPPRESS)

    parser = PeakgateArgumentParser(prog="peakgate", description=__doc__.strip().splitlines()[0])
    add_run_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[common], help="solve a peak problem from a JSON config")
    solve.add_argument("config")
    solve.add_argument("--trace", action="store_true", help="print the per-rank trace")

    repro = sub.add_parser("reproduce", parents=[common], help="compare a scenario against reference values")
    repro.add_argument("--scenario", required=True, choices=["a", "b", "c", "d"])
    repro.add_argument("--certificate", required=True, choices=["kl", "lyapunov"])
    repro.add_argument("--objective", required=True, type=int, choices=[1, 2])

    orbit = sub.add_parser("orbit", parents=[common], help="tabulate orbits of the initial points")
    orbit.add_argument("config")
    orbit.add_argument("--horizon", required=True, type=int)
    orbit.add_argument("--out", default=None, help="CSV file to write instead of stdout")

    ratio = sub.add_parser("ratio", parents=[common], help="contraction ratio of a Lyapunov function")
    ratio.add_argument("config", nargs="?", default=None)
    ratio.add_argument("--builtin-V", dest="builtin_v", action="store_true")
    ratio.add_argument("--radius-sq", type=float, default=None)
    ratio.add_argument("--mode", choices=["closed", "estimate"], default="closed")
    return parser


def _g(value) -> str:
    if value is None:
        return "inf"
    if isinstance(value, float):
        return f"{value:.{TABLE_SIGNIFICANT_DIGITS}g}"
    return str(value)


def _table(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, float_format=lambda v: f"{v:.{TABLE_SIGNIFICANT_DIGITS}g}")


def render_solve(report: SolveReport, fmt: OutputFormat, trace: bool) -> str:
    if fmt is OutputFormat.JSON:
        return report.model_dump_json(indent=2)
    trace_frame = pd.DataFrame([row.model_dump() for row in report.trace])
    if fmt is OutputFormat.CSV:
        if trace:
            return trace_frame.to_csv(index=False)
        summary = report.model_dump(exclude={"trace", "candidates", "warnings", "certificate_summary"})
        summary["stopping_integer_history"] = " ".join(str(k) for k in report.stopping_integer_history)
        summary.update({f"certificate_{k}": v for k, v in report.certificate_summary.model_dump().items()})
        return pd.DataFrame([summary]).to_csv(index=False)

    cert = report.certificate_summary
    lines = [
        f"optimum              {_g(report.optimum)}",
        f"argmax rank          {report.argmax_rank}",
        f"maximizing point     {report.maximizing_point}",
        f"stopping integer     {report.stopping_integer}",
        f"stopping history     {' -> '.join(str(k) for k in report.stopping_integer_history)}",
        f"certificate          {cert.kind} ({cert.label}): h(s) = {cert.h}, beta = {_g(cert.beta)}",
        f"h(0), h(1)           {_g(cert.h_at_zero)}, {_g(cert.h_at_one)}",
        f"useful               {report.usefulness}",
    ]
    if report.objective_offset:
        lines.append(f"objective offset     {_g(report.objective_offset)}")
    for candidate in report.candidates:
        lines.append(f"candidate {candidate.label:<18} K = {_g(candidate.stopping_integer)}")
    for warning in report.warnings:
        lines.append(f"warning: {warning}")
    if trace:
        for column in INFINITE_TRACE_COLUMNS:
            trace_frame[column] = trace_frame[column].astype(float).fillna(math.inf)
        lines.append("")
        lines.append(_table(trace_frame))
    return "\n".join(lines) + "\n"


def render_reproduction(report: ReproductionReport, fmt: OutputFormat) -> str:
    if fmt is OutputFormat.JSON:
        return report.model_dump_json(indent=2)
    frame = pd.DataFrame([row.model_dump() for row in report.rows])
    if fmt is OutputFormat.CSV:
        return frame.to_csv(index=False)
    header = f"scenario {report.scenario}, {report.certificate} certificate, objective pi_{report.objective}"
    return f"{header}\n{_table(frame)}\n"


def render_ratio(report: RatioReport, fmt: OutputFormat) -> str:
    if fmt is OutputFormat.JSON:
        return report.model_dump_json(indent=2)
    if fmt is OutputFormat.CSV:
        data = report.model_dump(exclude={"refinement_trail"})
        data["mode"] = report.mode.value
        return pd.DataFrame([data]).to_csv(index=False)
    lines = [f"ratio                {_g(report.value)}", f"mode                 {report.mode.value}"]
    lines.append(f"radius_sq            {_g(report.radius_sq)}")
    if report.sample_count is not None:
        lines.append(f"samples              {report.sample_count}")
        for step in report.refinement_trail:
            lines.append(f"refinement round {step.round}   {_g(step.value)}")
    if report.flag:
        lines.append(f"flag                 {report.flag}")
    return "\n".join(lines) + "\n"


def render_orbit(frame: pd.DataFrame, fmt: OutputFormat) -> str:
    if fmt is OutputFormat.JSON:
        return frame.to_json(orient="records", double_precision=15)
    if fmt is OutputFormat.CSV:
        return frame.to_csv(index=False)
    return _table(frame) + "\n"


def cmd_solve(service: PeakService, args) -> int:
    config = load_config(args.config)
    report, _ = service.solve(config)
    sys.stdout.write(render_solve(report, OutputFormat(args.format), args.trace))
    return ExitCode.OK


def cmd_reproduce(service: PeakService, args) -> int:
    report = reproduce(service, args.scenario, args.certificate, args.objective)
    sys.stdout.write(render_reproduction(report, OutputFormat(args.format)))
    if not report.passed:
        first = next(row for row in report.rows if not row.ok)
        raise ReproductionMismatchError(first.quantity, first.reference, first.computed)
    return ExitCode.OK


def cmd_orbit(service: PeakService, args) -> int:
    if args.horizon < 0:
        raise ConfigError("--horizon must be non-negative")
    config = load_config(args.config)
    frame = service.orbit(config, args.horizon)
    if args.out:
        write_orbit_csv(frame, args.out)
        logger.info(f"Wrote {len(frame)} orbit rows to {args.out}")
    else:
        sys.stdout.write(render_orbit(frame, OutputFormat(args.format)))
    return ExitCode.OK


def cmd_ratio(service: PeakService, args) -> int:
    mode = RatioMode(args.mode)
    if args.builtin_v:
        if args.radius_sq is None:
            raise ConfigError("--builtin-V needs --radius-sq")
        report = service.ratio_builtin(args.radius_sq, mode)
    elif args.config:
        report = service.ratio_from_config(load_config(args.config), mode)
    else:
        raise ConfigError("give either --builtin-V --radius-sq r or a config path")
    sys.stdout.write(render_ratio(report, OutputFormat(args.format)))
    return ExitCode.OK


COMMANDS = {
    "solve": cmd_solve,
    "reproduce": cmd_reproduce,
    "orbit": cmd_orbit,
    "ratio": cmd_ratio,
}


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging(settings)
    try:
        args = build_parser().parse_args(argv)
        service = PeakService(settings, seed=args.seed, tol=args.tol, guard=args.guard)
        return int(COMMANDS[args.command](service, args))
    except PeakgateError as e:
        logger.error(f"{EXIT_CODE_DESCRIPTION[e.exit_code]}: {e}")
        sys.stderr.write(f"error: {e}\n")
        return int(e.exit_code)
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        sys.stderr.write(f"error: {e}\n")
        return int(ExitCode.CONFIG_ERROR)


if __name__ == "__main__":
    sys.exit(main())
