#!/usr/bin/env python3
"""
Command-line front end.

    simulate  --system F --method product:<n>|closed|rk4:<steps> [--samples k] --out CSV
    converge  --system F --n-max N --out CSV [--jobs J]
    check     --system F [--json]

Data goes to files and standard output, diagnostics to standard error.
Exit codes: 0 success, 1 input error, 2 numerical failure.
"""
import argparse, csv, json, logging, os, sys, time
from typing import Optional, Sequence

from engine import settings
from engine.catalog import heisenberg_coords
from engine.controllability import controllability_report, render_report, report_to_dict
from engine.errors import ModelError, NumericalError
from engine.flows import (
    SolveMethod, convergence_study, doubling_ladder, fitted_order, ode_residual,
    solve_piecewise, translate_solution, write_trajectory_csv,
)
from engine.models import load_system

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2


def _read_system(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ModelError(f"cannot read system file {path}: {e}") from e
    return load_system(text)


def _fmt(v) -> str:
    return format(v, ".17g")


def _audit(audit_log: str, command: str, system: str, ok: bool, reason: str):
    """Append one JSON line per run"""
    record = {
        "ts": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "command": command, "system": system,
        "ok": ok, "reason": reason
    }
    try:
        parent = os.path.dirname(audit_log)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(audit_log, "a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")
    except OSError as e:
        logger.error("failed to write audit log: %s", e)


class ControlCLI:
    def __init__(self, out=None):
        self.out = out if out is not None else sys.stdout

    def _print(self, text: str = ""):
        print(text, file=self.out)

    def cmd_simulate(self, args) -> int:
        """Write a sampled trajectory and report its endpoint"""
        system, control = _read_system(args.system)
        method = SolveMethod.parse(args.method)
        traj = solve_piecewise(system, control, method, args.samples)
        start = system.start_point()
        if start is not None:
            traj = translate_solution(system, traj, start)
        write_trajectory_csv(traj, args.out)

        end = traj.endpoint.matrix
        self._print(f"method: {method.tag}")
        self._print(f"samples: {len(traj)}")
        self._print(f"endpoint (t = {_fmt(traj.times[-1])}):")
        for row in end:
            self._print("  " + " ".join(_fmt(v) for v in row))
        if system.model.name == "heisenberg":
            x, y, z = heisenberg_coords(end)
            self._print(f"heisenberg (x, y, z): {_fmt(x)} {_fmt(y)} {_fmt(z)}")
        needed = int(settings.get("min_residual_samples"))
        if len(traj) >= needed:
            self._print(f"ode residual: {ode_residual(system, traj, control):.3e}")
        else:
            self._print(f"ode residual: n/a (needs >= {needed} samples, have {len(traj)})")
        return EXIT_OK

    def cmd_converge(self, args) -> int:
        """Error of the product formula against a reference for n = 1, 2, 4, ..., N"""
        system, control = _read_system(args.system)
        ladder = doubling_ladder(args.n_max)
        reference, rows = convergence_study(system, control, ladder, jobs=args.jobs)
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["n", "error"])
            for n, err in rows:
                writer.writerow([n, _fmt(err)])
        self._print(f"reference: {reference}")
        for n, err in rows:
            self._print(f"  n = {n:<6d} error = {err:.3e}")
        order = fitted_order(rows)
        if order is None:
            self._print("fitted order: exact (errors at round-off level)")
        else:
            self._print(f"fitted order: {order:.3f}")
        return EXIT_OK

    def cmd_check(self, args) -> int:
        """Controllability report; verdicts are data, not errors"""
        system, _ = _read_system(args.system)
        report = controllability_report(system)
        if args.json:
            self._print(json.dumps(report_to_dict(report), indent=2, sort_keys=True))
        else:
            self._print(render_report(report))
        return EXIT_OK

    def dispatch(self, args) -> int:
        handler = {
            "simulate": self.cmd_simulate,
            "converge": self.cmd_converge,
            "check": self.cmd_check,
        }[args.command]
        ok, reason = False, ""
        try:
            code = handler(args)
            ok, reason = True, "ok"
        except ModelError as e:
            reason = str(e)
            print(f"{args.command} failed: {e}", file=sys.stderr)
            code = EXIT_INPUT
        except NumericalError as e:
            reason = str(e)
            print(f"{args.command} failed (numerical): {e}", file=sys.stderr)
            code = EXIT_NUMERICAL
        except OSError as e:
            reason = str(e)
            print(f"{args.command} failed: {e}", file=sys.stderr)
            code = EXIT_INPUT
        if args.audit_log:
            _audit(args.audit_log, args.command, args.system, ok, reason)
        return code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", required=True, help="system document (JSON)")
    common.add_argument("--audit-log", default=None, help="append a JSON line per run to this file")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")

    parser = argparse.ArgumentParser(prog="lie-control",
                                     description="Linear control systems on matrix Lie groups")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="sample a trajectory")
    sim.add_argument("--method", required=True, help="product:<n> | closed | rk4:<steps>")
    sim.add_argument("--samples", type=int, default=100, help="samples per control segment")
    sim.add_argument("--out", required=True, help="trajectory CSV")

    conv = sub.add_parser("converge", parents=[common], help="product-formula convergence study")
    conv.add_argument("--n-max", type=int, required=True, help="largest n (doubling from 1)")
    conv.add_argument("--out", required=True, help="CSV of n, error")
    conv.add_argument("--jobs", type=int, default=1, help="worker threads")

    chk = sub.add_parser("check", parents=[common], help="controllability report")
    chk.add_argument("--json", action="store_true", help="emit the report as JSON")
    return parser


def _configure_logging(args):
    root = logging.getLogger()
    if args.verbose:
        root.setLevel(logging.DEBUG)
    elif args.quiet:
        root.setLevel(logging.WARNING)


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors; those are input errors here
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT
    _configure_logging(args)
    return ControlCLI(out).dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
