#!/usr/bin/env python3
"""
Command-line entry point: unit conversion, spectra, crossings, pulse programs,
gate protocols and the timing budget.

Exit codes: 0 success, 1 usage error, 2 physics/validation error.
"""

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path
from typing  import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from loguru        import logger
from pydantic      import BaseModel, ValidationError
from rich.console  import Console
from rich.table    import Table

from core.config      import Config, SystemParams, load_params
from core.errors      import EndospinError, ParameterError, PulseSyntaxError
from core.hamiltonian import weak_coupling_report
from core.protocol    import (QubitEncoding, SwapControls, convert_only, swap,
                              swap_truth_table, timing_budget)
from core.pulseprog   import execute, parse, serialize, state_from_spec, validate
from core.spectrum    import (avoided_gap, enumerate_crossings, full_spectrum,
                              spectrum_curves, transition_table)
from core.spinops     import PRODUCT_LABELS, low_lying_labels
from core.units       import QUOTED_J_KELVIN, QUOTED_J_MHZ, convert

LOG_FORMAT = ("<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
              "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>")


class OutputRecord(BaseModel):
    schema_version: str = Config.SCHEMA_VERSION
    tool_version:   str = Config.TOOL_VERSION
    command:        List[str]
    params:         Dict[str, Any]
    payload:        Any

    def to_json(self) -> str:
        return dump_json(self.model_dump(mode="json"))


def dump_json(obj: Any) -> str:
    return json.dumps(_rounded(obj), sort_keys=True, indent=2)


def _rounded(obj: Any) -> Any:
    """Fixed significant-digit floats so repeated runs are byte-identical."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return float(f"{obj:.{Config.SIG_DIGITS}g}")
    if isinstance(obj, dict):
        return {str(k): _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def configure_logging(debug: bool = False) -> None:
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level="DEBUG" if debug else Config.LOG_LEVEL)
    logger.add(Config.LOG_FILE, rotation="500 MB", level="DEBUG")


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="JSON parameter file (default: $ENDOSPIN_PARAMS)")
    common.add_argument("--json", action="store_true", help="Emit a versioned JSON record")
    common.add_argument("--debug", action="store_true", help="Enable debug logging")
    common.add_argument("--j-eff", type=float, dest="j_eff_kelvin", help="Effective coupling J in K")
    common.add_argument("--d-axial", type=float, dest="d_kelvin", help="Axial anisotropy D in K")
    common.add_argument("--theta", type=float, dest="theta_rad", help="Dipolar angle in rad")
    common.add_argument("--tunnel-gap", type=float, dest="tunnel_gap_kelvin",
                        help="Default Fe8 tunnel splitting in K")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="endospin", description="Endohedral fullerene + Fe8 spin simulator",
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", parents=[common], help="Convert between K, MHz, T, mT, s, ns")
    p.add_argument("--value", type=float, required=True)
    p.add_argument("--from", dest="from_unit", required=True)
    p.add_argument("--to", dest="to_unit", required=True)
    p.add_argument("--g", type=float, default=2.0, help="g-factor of the Zeeman bridge")

    p = sub.add_parser("levels", parents=[common], help="Energy curves over a field range (CSV)")
    p.add_argument("--bz-from", type=float, default=0.0)
    p.add_argument("--bz-to", type=float, default=0.05)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--model", choices=["diagonal", "full"], default="diagonal")
    p.add_argument("--all-states", action="store_true", help="All 84 states, not only the 8 low-lying")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", help="Write CSV here instead of stdout")

    p = sub.add_parser("crossings", parents=[common], help="Level crossings in a field range")
    p.add_argument("--bz-from", type=float, default=0.0)
    p.add_argument("--bz-to", type=float, default=0.05)
    p.add_argument("--all-pairs", action="store_true", help="Search all 84 product states")
    p.add_argument("--gap", action="store_true", help="Also compute avoided gaps of first-order crossings")
    p.add_argument("--table", action="store_true", help="Render a table instead of the JSON array")

    p = sub.add_parser("transitions", parents=[common], help="Degenerate transition frequencies")
    p.add_argument("--bz", type=float, required=True)

    p = sub.add_parser("spectrum", parents=[common], help="Exact spectrum at one field")
    p.add_argument("--bz", type=float, required=True)
    p.add_argument("--transverse", action="store_true", help="Include the E(Sx^2 - Sy^2) term")
    p.add_argument("--weak-coupling", action="store_true", help="Compare against the diagonal model")

    p = sub.add_parser("run", parents=[common], help="Validate and execute a .pulse program")
    p.add_argument("file")
    p.add_argument("--out", help="Write the JSON record here")
    p.add_argument("--validate-only", action="store_true")

    p = sub.add_parser("protocol", parents=[common], help="SWAP, conversion or SWAP truth table")
    p.add_argument("operation", choices=["swap", "convert", "truth-table"])
    p.add_argument("--encoding", choices=["inner", "outer"], default="outer")
    p.add_argument("--init", default="|3/2,-10>", help="State spec, e.g. '0.6|3/2,-10>+0.8|-3/2,-10>'")
    p.add_argument("--mode", choices=["ideal", "detuned"], default="ideal")
    p.add_argument("--rate", type=float, default=1e-4, help="Sweep rate in T/s")
    p.add_argument("--delta", type=float, default=None, help="Tunnel splitting in K")
    p.add_argument("--window", type=float, default=Config.SWEEP_HALF_WINDOW, help="Sweep half-window in T")
    p.add_argument("--pulse-bz", type=float, default=Config.PULSE_BZ)
    p.add_argument("--control-m", type=int, choices=[10, -10], default=10)

    p = sub.add_parser("budget", parents=[common], help="Decoherence timing budget")
    p.add_argument("--rabi", type=float, required=True, help="Rabi value, MHz-labelled")
    p.add_argument("--linewidth", type=float, required=True, help="Linewidth value, MHz-labelled")
    p.add_argument("--t0", type=float, default=0.0, help="Sweep time T0 in ns")
    p.add_argument("--convention", choices=["angular", "paper", "si", "strict_si"], default="angular",
                   help="paper is an alias of angular, si of strict_si")

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    keys = ("j_eff_kelvin", "d_kelvin", "theta_rad", "tunnel_gap_kelvin")
    return {k: getattr(args, k, None) for k in keys}


def _emit(args: argparse.Namespace, argv: List[str], p: SystemParams, payload: Any,
          render: Optional[Callable[[Console], None]] = None, out: Optional[str] = None) -> None:
    text = None
    if args.json or render is None:
        text = OutputRecord(command=argv, params=p.snapshot(), payload=payload).to_json()
    if out and text is not None:
        Path(out).write_text(text + "\n", encoding="utf-8")
        logger.info(f"Wrote {out}")
    elif text is not None:
        sys.stdout.write(text + "\n")
    else:
        render(Console())


def cmd_convert(args, argv, p):
    result = convert(args.value, args.from_unit, args.to_unit, g=args.g)
    notes = []
    if args.from_unit == "K" and args.to_unit == "MHz" and args.value == QUOTED_J_KELVIN:
        notes.append(f"{QUOTED_J_KELVIN} K is quoted as {QUOTED_J_MHZ:g} MHz in the literature; "
                     f"the exact k_B/h conversion gives {result:.4g} MHz")
    payload = {"value": args.value, "from": args.from_unit, "to": args.to_unit,
               "g": args.g, "result": result, "notes": notes}

    def render(console: Console):
        console.print(f"{args.value:.6g} {args.from_unit} = {result:.6g} {args.to_unit}")
        for note in notes:
            console.print(f"[yellow]note:[/yellow] {note}")

    _emit(args, argv, p, payload, render)


def cmd_levels(args, argv, p):
    if args.points < 2:
        raise EndospinError(f"--points must be at least 2, got {args.points}")
    grid = np.linspace(args.bz_from, args.bz_to, args.points)
    states = PRODUCT_LABELS if args.all_states else low_lying_labels()
    levels = spectrum_curves(p, grid, states, model=args.model, workers=args.workers)
    frame = pd.DataFrame({
        "bz":          [lvl.bz for lvl in levels],
        "state_label": [lvl.label for lvl in levels],
        "energy_K":    [lvl.energy for lvl in levels],
    })
    if args.json:
        _emit(args, argv, p, frame.to_dict(orient="records"))
        return
    if args.out:
        frame.to_csv(args.out, index=False, float_format=f"%.{Config.SIG_DIGITS}g")
        logger.info(f"Wrote {len(frame)} rows to {args.out}")
    else:
        frame.to_csv(sys.stdout, index=False, float_format=f"%.{Config.SIG_DIGITS}g")


def cmd_crossings(args, argv, p):
    states = PRODUCT_LABELS if args.all_pairs else low_lying_labels()
    crossings = enumerate_crossings(p, (args.bz_from, args.bz_to), states)
    rows = []
    for c in crossings:
        if args.gap and c.order == "first_order":
            c = c.model_copy(update={"gap": avoided_gap(c.state_a, c.state_b, p)})
        rows.append(c.record())

    def render(console: Console):
        table = Table(title=f"Crossings in [{args.bz_from}, {args.bz_to}] T")
        for col in ("state a", "state b", "B* (T)", "omega* (K)", "order", "gap (K)"):
            table.add_column(col)
        for r in rows:
            table.add_row(r["label_a"], r["label_b"], f"{r['bz_star']:.6f}",
                          f"{r['omega_star']:.6g}", r["order"], f"{r['gap']:.3e}")
        console.print(table)

    if args.table and not args.json:
        render(Console())
    elif args.json:
        _emit(args, argv, p, rows)
    else:
        sys.stdout.write(dump_json(rows) + "\n")


def cmd_transitions(args, argv, p):
    rows = [{"m": m, "freq_kelvin": k, "freq_mhz": mhz} for m, k, mhz in transition_table(p, args.bz)]

    def render(console: Console):
        table = Table(title=f"-omega + mJ at B_z = {args.bz} T")
        table.add_column("m", justify="right")
        table.add_column("K", justify="right")
        table.add_column("MHz", justify="right")
        for r in rows:
            table.add_row(str(r["m"]), f"{r['freq_kelvin']:.6g}", f"{r['freq_mhz']:.6g}")
        console.print(table)

    _emit(args, argv, p, rows, render)


def cmd_spectrum(args, argv, p):
    levels = full_spectrum(p, args.bz, include_transverse=args.transverse)
    payload: Dict[str, Any] = {
        "bz": args.bz,
        "levels": [{"label": lvl.label, "energy_kelvin": lvl.energy} for lvl in levels],
    }
    if args.weak_coupling:
        report = weak_coupling_report(p, args.bz)
        payload["weak_coupling"] = {
            "max_deviation": report.max_deviation,
            "global_bound":  report.global_bound,
            "delta_min":     report.delta_min,
            "all_within":    report.all_within,
        }

    def render(console: Console):
        table = Table(title=f"Spectrum at B_z = {args.bz} T")
        table.add_column("level")
        table.add_column("E (K)", justify="right")
        for row in payload["levels"]:
            table.add_row(row["label"], f"{row['energy_kelvin']:.8f}")
        console.print(table)
        if "weak_coupling" in payload:
            console.print(payload["weak_coupling"])

    _emit(args, argv, p, payload, render)


def cmd_run(args, argv, p):
    path = Path(args.file)
    if not path.exists():
        raise EndospinError(f"Program not found: {path}")
    program = parse(path.read_bytes())
    diagnostics = validate(program, p)
    for d in diagnostics:
        logger.warning(str(d))

    payload: Dict[str, Any] = {
        "program":     serialize(program),
        "diagnostics": [asdict(d) for d in diagnostics],
    }
    if not args.validate_only:
        result = execute(program, p)
        payload.update({
            "elapsed":           result.elapsed,
            "measurement":       result.measurement,
            "final_populations": {k: v for k, v in sorted(result.records[-1].populations.items())}
                                 if result.records else {},
            "records":           [asdict(r) for r in result.records],
        })
    args.json = True
    _emit(args, argv, p, payload, out=args.out)


def cmd_protocol(args, argv, p):
    enc = QubitEncoding(args.encoding)
    try:
        controls = SwapControls(mode=args.mode, pulse_bz=args.pulse_bz, rate=args.rate,
                                delta=args.delta, window=args.window, control_m=args.control_m)
    except ValidationError as e:
        raise ParameterError(f"Invalid protocol controls: {e}") from e
    if args.operation == "truth-table":
        payload = [row.model_dump(mode="json") for row in swap_truth_table(enc, p, controls)]
    else:
        state = state_from_spec(args.init)
        run = swap if args.operation == "swap" else convert_only
        payload = run(enc, state, p, controls).model_dump(mode="json")
    args.json = True
    _emit(args, argv, p, payload)


def cmd_budget(args, argv, p):
    convention = "strict_si" if args.convention in ("si", "strict_si") else "angular"
    result = timing_budget(args.rabi, args.linewidth, args.t0 * 1e-9, convention)
    payload = {**result.model_dump(), "t0_ns": args.t0, "t0_max_ns": result.t0_max * 1e9}

    def render(console: Console):
        table = Table(title=f"Timing budget ({convention})")
        table.add_column("quantity")
        table.add_column("value", justify="right")
        table.add_row("T0", f"{args.t0:g} ns")
        table.add_row("T0 max", f"{result.t0_max * 1e9:.2f} ns")
        table.add_row("feasible", str(result.feasible))
        table.add_row("ok", "[green]yes[/green]" if result.ok else "[red]no[/red]")
        console.print(table)

    _emit(args, argv, p, payload, render)


COMMANDS = {
    "convert":     cmd_convert,
    "levels":      cmd_levels,
    "crossings":   cmd_crossings,
    "transitions": cmd_transitions,
    "spectrum":    cmd_spectrum,
    "run":         cmd_run,
    "protocol":    cmd_protocol,
    "budget":      cmd_budget,
}


def dispatch(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand and return the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1

    configure_logging(args.debug)
    try:
        params = load_params(args.params, _overrides(args))
        COMMANDS[args.command](args, argv, params)
    except PulseSyntaxError as e:
        for d in e.diagnostics:
            sys.stderr.write(f"{args.file}:{d}\n")
        return 2
    except EndospinError as e:
        logger.error(f"{args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return 2
    return 0
