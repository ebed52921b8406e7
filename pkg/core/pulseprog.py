# pulseprog.py
"""
Line-oriented pulse-program language.

    # comment
    init 0.6|3/2,-10> + 0.8|-3/2,-10>
    set bz 50mT
    pulse freq=2246.8MHz rabi=30MHz angle=1pi [phase=0.5pi] [mode=ideal|detuned]
    sweep bz from=0.0175T to=0.0215T rate=1e-4T/s [gap=1e-6K]
    wait 10ns [model=diagonal|full]
    measure fe8

Keywords, keys and enumerated values are case-insensitive; unit symbols are not.
Statements keep the numbers as written (angles in units of pi) and every
physical value in base units (T, MHz, s, T/s, K), so ``serialize`` is exact.
"""

import math
import re
from dataclasses import dataclass, field
from fractions   import Fraction
from typing      import Dict, List, Optional, Sequence, Tuple, Union

from loguru import logger

from core.config      import Config, SystemParams
from core.dynamics    import (ControlSegment, EvolutionResult, SegmentRecord,
                              apply_segment, population_record)
from core.errors      import Diagnostic, ParameterError, PulseSyntaxError
from core.hamiltonian import weak_coupling_ratio
from core.protocol    import fe8_signs
from core.spectrum    import enumerate_crossings
from core.spinops     import M_VALUES, N_VALUES, QuantumState, low_lying_labels
from core.units       import kelvin_to_mhz

Component = Tuple[float, Tuple[float, int]]

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_TOKEN  = re.compile(r"\S+")

FIELD_UNITS = {"T": 1.0, "mT": 1e-3}
FREQ_UNITS  = {"MHz": 1.0, "GHz": 1e3, "kHz": 1e-3}
TIME_UNITS  = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
RATE_UNITS  = {"T/s": 1.0, "mT/s": 1e-3}
GAP_UNITS   = {"K": 1.0, "mK": 1e-3}
ANGLE_UNITS = {"pi": 1.0}


@dataclass(frozen=True)
class InitStatement:
    components: Tuple[Component, ...]
    line:       int = field(default=0, compare=False)

    def state(self) -> QuantumState:
        return QuantumState.from_components(self.components)


@dataclass(frozen=True)
class SetFieldStatement:
    bz:   float
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PulseStatement:
    freq:     float           # MHz
    rabi:     float           # MHz, Omega / 2pi
    angle_pi: float
    phase_pi: float = 0.0
    mode:     str = "ideal"
    line:     int = field(default=0, compare=False)

    @property
    def duration(self) -> float:
        return self.angle_pi * math.pi / (2 * math.pi * self.rabi * 1e6)

    def segment(self, bz: float) -> ControlSegment:
        return ControlSegment.pulse(bz, self.freq, 2 * math.pi * self.rabi * 1e6,
                                    self.angle_pi * math.pi, self.phase_pi * math.pi, self.mode)


@dataclass(frozen=True)
class SweepStatement:
    bz_from: float
    bz_to:   float
    rate:    float
    gap:     Optional[float] = None
    line:    int = field(default=0, compare=False)

    @property
    def duration(self) -> float:
        return abs(self.bz_to - self.bz_from) / self.rate

    def segment(self) -> ControlSegment:
        return ControlSegment.sweep(self.bz_from, self.bz_to, self.rate, self.gap)


@dataclass(frozen=True)
class WaitStatement:
    duration: float
    model:    str = "diagonal"
    line:     int = field(default=0, compare=False)

    def segment(self, bz: float) -> ControlSegment:
        if self.model == "full":
            return ControlSegment.hold(bz, self.duration)
        return ControlSegment.wait(bz, self.duration)


@dataclass(frozen=True)
class MeasureStatement:
    target: str = "fe8"
    line:   int = field(default=0, compare=False)


Statement = Union[InitStatement, SetFieldStatement, PulseStatement,
                  SweepStatement, WaitStatement, MeasureStatement]


@dataclass(frozen=True)
class PulseProgram:
    statements: Tuple[Statement, ...] = ()

    @property
    def init(self) -> Optional[InitStatement]:
        return next((s for s in self.statements if isinstance(s, InitStatement)), None)

    @property
    def duration(self) -> float:
        return sum(getattr(s, "duration", 0.0) for s in self.statements)

    def segments(self, bz: float = 0.0) -> List[ControlSegment]:
        """Timed statements as ControlSegments, resolving the field set before each pulse."""
        out = []
        for stmt in self.statements:
            if isinstance(stmt, SetFieldStatement):
                bz = stmt.bz
            elif isinstance(stmt, SweepStatement):
                out.append(stmt.segment())
                bz = stmt.bz_to
            elif isinstance(stmt, (PulseStatement, WaitStatement)):
                out.append(stmt.segment(bz))
        return out


class _LineError(Exception):
    def __init__(self, code: str, message: str, column: int):
        super().__init__(message)
        self.code = code
        self.message = message
        self.column = column


def _quantity(text: str, column: int, units: Dict[str, float], what: str) -> Tuple[float, float]:
    """(number as written, value in base units) of ``<number><unit>``."""
    match = _NUMBER.match(text)
    if not match:
        raise _LineError("E002", f"malformed number in {what}: '{text}'", column)
    unit = text[match.end():]
    if unit not in units:
        raise _LineError("E004", f"unknown unit '{unit}' for {what}; expected one of "
                                 f"{', '.join(units)}", column + match.end())
    number = float(match.group())
    value = number * units[unit]
    if not (math.isfinite(number) and math.isfinite(value)):
        raise _LineError("E002", f"{what} is not a finite number: '{text}'", column)
    return number, value


def _positive(value: float, what: str, column: int) -> float:
    if value <= 0:
        raise _LineError("E007", f"{what} must be > 0, got {value!r}", column)
    return value


def _key_values(tokens: Sequence[Tuple[str, int]], allowed: Sequence[str],
                required: Sequence[str], column: int) -> Dict[str, Tuple[str, int]]:
    values = {}
    for text, col in tokens:
        raw_key, sep, value = text.partition("=")
        if not sep:
            raise _LineError("E006", f"expected key=value, got '{text}'", col)
        key = raw_key.lower()
        if key not in allowed:
            raise _LineError("E006", f"unknown key '{raw_key}'; expected one of {', '.join(allowed)}", col)
        if key in values:
            raise _LineError("E005", f"duplicate key '{key}'", col)
        values[key] = (value, col + len(raw_key) + 1)
    missing = [k for k in required if k not in values]
    if missing:
        raise _LineError("E003", f"missing required key(s): {', '.join(missing)}", column)
    return values


def _choice(text: str, column: int, options: Sequence[str], what: str) -> str:
    value = text.lower()
    if value not in options:
        raise _LineError("E007", f"{what} must be one of {', '.join(options)}, got '{text}'", column)
    return value


_TERM = re.compile(r"\s*([+-]?)\s*((?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)?\s*"
                   r"\|\s*([+-]?\d+(?:/2)?)\s*,\s*([+-]?\d+)\s*>\s*")


def _state_components(text: str) -> Tuple[Tuple[Component, ...], Optional[Tuple[str, str, int]]]:
    """Components of ``c1|n,m> + c2|n,m> ...``, or an error (code, message, offset)."""
    components, pos = [], 0
    if not text.strip():
        return (), ("E003", "init needs a state such as |3/2,-10>", 0)
    while pos < len(text):
        match = _TERM.match(text, pos)
        if not match or (components and not match.group(1)):
            return (), ("E006", f"malformed state term at '{text[pos:pos + 20]}'", pos)
        sign, coef, n_text, m_text = match.groups()
        try:
            coefficient = float(coef) if coef else 1.0
            n, m = float(Fraction(n_text)), int(m_text)
        except (ValueError, OverflowError, ZeroDivisionError):
            return (), ("E002", f"malformed number in state term '{match.group().strip()}'", pos)
        if not math.isfinite(coefficient):
            return (), ("E002", f"coefficient is not finite in '{match.group().strip()}'", pos)
        if n not in N_VALUES or m not in M_VALUES:
            return (), ("E007", f"|{n_text},{m_text}> is outside the 3/2 x 10 basis", pos)
        components.append((-coefficient if sign == "-" else coefficient, (n, m)))
        pos = match.end()
    if all(c == 0 for c, _ in components):
        return (), ("E007", "state has zero norm", 0)
    if not math.isfinite(sum(c * c for c, _ in components)):
        return (), ("E007", "state norm is not representable; rescale the coefficients", 0)
    return tuple(components), None


def parse_state_spec(text: str) -> Tuple[Component, ...]:
    """Components of a ket expression like ``0.6|3/2,-10>+0.8|-3/2,-10>``."""
    components, error = _state_components(text)
    if error:
        raise ParameterError(f"invalid state '{text}': {error[1]}")
    return components


def state_from_spec(text: str) -> QuantumState:
    return QuantumState.from_components(parse_state_spec(text))


def _parse_statement(tokens: List[Tuple[str, int]], lineno: int, code_part: str) -> Statement:
    keyword, column = tokens[0][0].lower(), tokens[0][1]
    args = tokens[1:]

    if keyword == "init":
        # raw text keeps the whitespace so error offsets map onto columns
        start = args[0][1] if args else column
        text = code_part[start - 1:] if args else ""
        components, error = _state_components(text)
        if error:
            code, message, offset = error
            raise _LineError(code, message, start + offset)
        return InitStatement(components, line=lineno)

    if keyword == "set":
        if len(args) != 2 or args[0][0].lower() != "bz":
            raise _LineError("E006", "expected 'set bz <value><T|mT>'", column)
        _, bz = _quantity(args[1][0], args[1][1], FIELD_UNITS, "field")
        return SetFieldStatement(bz, line=lineno)

    if keyword == "pulse":
        kv = _key_values(args, ("freq", "rabi", "angle", "phase", "mode"),
                         ("freq", "rabi", "angle"), column)
        _, freq = _quantity(*kv["freq"], FREQ_UNITS, "freq")
        _, rabi = _quantity(*kv["rabi"], FREQ_UNITS, "rabi")
        angle_pi, _ = _quantity(*kv["angle"], ANGLE_UNITS, "angle")
        phase_pi = _quantity(*kv["phase"], ANGLE_UNITS, "phase")[0] if "phase" in kv else 0.0
        mode = _choice(*kv["mode"], ("ideal", "detuned"), "mode") if "mode" in kv else "ideal"
        _positive(freq, "freq", kv["freq"][1])
        _positive(rabi, "rabi", kv["rabi"][1])
        _positive(angle_pi, "angle", kv["angle"][1])
        return PulseStatement(freq, rabi, angle_pi, phase_pi, mode, line=lineno)

    if keyword == "sweep":
        if not args or args[0][0].lower() != "bz":
            raise _LineError("E006", "expected 'sweep bz from=... to=... rate=...'", column)
        kv = _key_values(args[1:], ("from", "to", "rate", "gap"), ("from", "to", "rate"), column)
        _, bz_from = _quantity(*kv["from"], FIELD_UNITS, "from")
        _, bz_to = _quantity(*kv["to"], FIELD_UNITS, "to")
        _, rate = _quantity(*kv["rate"], RATE_UNITS, "rate")
        _positive(rate, "rate", kv["rate"][1])
        gap = None
        if "gap" in kv:
            gap = _positive(_quantity(*kv["gap"], GAP_UNITS, "gap")[1], "gap", kv["gap"][1])
        if bz_from == bz_to:
            raise _LineError("E007", "sweep needs distinct from and to fields", kv["to"][1])
        return SweepStatement(bz_from, bz_to, rate, gap, line=lineno)

    if keyword == "wait":
        if not args:
            raise _LineError("E003", "wait needs a duration", column)
        _, duration = _quantity(args[0][0], args[0][1], TIME_UNITS, "duration")
        _positive(duration, "duration", args[0][1])
        kv = _key_values(args[1:], ("model",), (), column)
        model = _choice(*kv["model"], ("diagonal", "full"), "model") if "model" in kv else "diagonal"
        return WaitStatement(duration, model, line=lineno)

    if keyword == "measure":
        if len(args) != 1 or args[0][0].lower() != "fe8":
            raise _LineError("E006", "expected 'measure fe8'", column)
        return MeasureStatement(line=lineno)

    raise _LineError("E001", f"unknown keyword '{tokens[0][0]}'", column)


def parse(text: Union[str, bytes]) -> PulseProgram:
    """Parse program text; raises PulseSyntaxError listing one diagnostic per bad line."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            line = text[:e.start].count(b"\n") + 1
            column = e.start - (text.rfind(b"\n", 0, e.start) + 1) + 1
            raise PulseSyntaxError([Diagnostic("E000", f"invalid UTF-8: {e.reason}", line, column)])

    statements, diagnostics = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        code_part = raw.split("#", 1)[0]
        tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(code_part)]
        if not tokens:
            continue
        try:
            statements.append(_parse_statement(tokens, lineno, code_part))
        except _LineError as e:
            diagnostics.append(Diagnostic(e.code, e.message, lineno, e.column))

    if diagnostics:
        raise PulseSyntaxError(diagnostics)
    return PulseProgram(tuple(statements))


def _format_n(n: float) -> str:
    return str(Fraction(n).limit_denominator(2))


def _format_state(components: Sequence[Component]) -> str:
    parts = []
    for i, (c, (n, m)) in enumerate(components):
        coef = repr(float(c))
        if i and not coef.startswith("-"):
            coef = "+" + coef
        parts.append(f"{coef}|{_format_n(n)},{m}>")
    return "".join(parts)


def serialize(program: PulseProgram) -> str:
    """Canonical text: base units, explicit optional keys, repr() numbers."""
    lines = []
    for s in program.statements:
        if isinstance(s, InitStatement):
            lines.append(f"init {_format_state(s.components)}")
        elif isinstance(s, SetFieldStatement):
            lines.append(f"set bz {s.bz!r}T")
        elif isinstance(s, PulseStatement):
            lines.append(f"pulse freq={s.freq!r}MHz rabi={s.rabi!r}MHz angle={s.angle_pi!r}pi "
                         f"phase={s.phase_pi!r}pi mode={s.mode}")
        elif isinstance(s, SweepStatement):
            gap = f" gap={s.gap!r}K" if s.gap is not None else ""
            lines.append(f"sweep bz from={s.bz_from!r}T to={s.bz_to!r}T rate={s.rate!r}T/s{gap}")
        elif isinstance(s, WaitStatement):
            lines.append(f"wait {s.duration!r}s model={s.model}")
        elif isinstance(s, MeasureStatement):
            lines.append("measure fe8")
    return "\n".join(lines) + ("\n" if lines else "")


def decoherence_time(linewidth_mhz: float, convention: str) -> float:
    """Coherence window set by the ESR linewidth under the budget convention."""
    if convention == "angular":
        return 2 * math.pi / (linewidth_mhz * 1e6)
    return 1 / (linewidth_mhz * 1e6)


def validate(program: PulseProgram, p: SystemParams) -> List[Diagnostic]:
    """Physics lint; returns warnings and never raises."""
    found = []
    j_mhz = abs(kelvin_to_mhz(p.j_eff))

    if program.statements and program.init is None:
        found.append(Diagnostic("W105", "program has no init statement; starting from "
                                        f"|3/2,{p.fe8_start_m}>", 1, 1, "warning"))

    def check_coupling(s: Statement, bz_from: float, bz_to: Optional[float] = None) -> None:
        ratio = weak_coupling_ratio(p, bz_from, bz_to)
        if ratio > Config.WEAK_COUPLING_RATIO:
            found.append(Diagnostic("W106", f"|J|/min(|omega|, D) = {ratio:.3g} exceeds "
                                            f"{Config.WEAK_COUPLING_RATIO:g}; the diagonal "
                                            "weak-coupling model is unreliable here",
                                    s.line, 1, "warning"))

    bz = 0.0
    for s in program.statements:
        if isinstance(s, SetFieldStatement):
            bz = s.bz
        elif isinstance(s, PulseStatement):
            if s.rabi >= j_mhz:
                found.append(Diagnostic("W101", f"pulse bandwidth {s.rabi:.6g} MHz >= J = {j_mhz:.6g} MHz; "
                                                "neighbouring columns are not resolved", s.line, 1, "warning"))
            check_coupling(s, bz)
        elif isinstance(s, SweepStatement):
            check_coupling(s, s.bz_from, s.bz_to)
            bz = s.bz_to
            lo, hi = sorted((s.bz_from, s.bz_to))
            crossings = enumerate_crossings(p, (lo, hi), low_lying_labels())
            first = [c for c in crossings if c.order == "first_order"]
            if len(first) > 1:
                fields = ", ".join(f"{c.bz_star:.6g} T" for c in first)
                found.append(Diagnostic("W102", f"sweep window covers {len(first)} first-order "
                                                f"crossings ({fields})", s.line, 1, "warning"))
            if len(first) < len(crossings):
                found.append(Diagnostic("W104", f"sweep passes {len(crossings) - len(first)} "
                                                "higher-order crossing(s), treated as diabatic",
                                        s.line, 1, "warning"))

    limit = decoherence_time(p.linewidth, p.budget_convention)
    if program.duration > limit:
        found.append(Diagnostic("W103", f"program lasts {program.duration:.4g} s, beyond the "
                                        f"{limit:.4g} s decoherence budget ({p.budget_convention})",
                                1, 1, "warning"))
    return found


def execute(program: PulseProgram, p: SystemParams) -> EvolutionResult:
    """Run the program from its init state (or |3/2, fe8_start_m>) at an initial field of 0 T."""
    init = program.init
    if init is None:
        logger.warning(f"No init statement; starting from |3/2,{p.fe8_start_m}>")
        state = QuantumState.basis(1.5, p.fe8_start_m)
    else:
        state = init.state()

    result = EvolutionResult(final_state=state)
    bz = 0.0

    def record(index: int, kind: str, note: str = "") -> None:
        result.records.append(SegmentRecord(index=index, kind=kind, elapsed=result.elapsed, bz=bz,
                                            populations=population_record(state), note=note))

    for index, stmt in enumerate(program.statements):
        if isinstance(stmt, InitStatement):
            record(index, "init")
        elif isinstance(stmt, SetFieldStatement):
            bz = stmt.bz
            record(index, "set")
        elif isinstance(stmt, MeasureStatement):
            plus, minus, zero = fe8_signs(state)
            result.measurement = {"sign_plus": plus, "sign_minus": minus, "unresolved": zero}
            record(index, "measure", f"P(+)={plus:.6f} P(-)={minus:.6f}")
        else:
            note = ""
            if isinstance(stmt, SweepStatement):
                segment = stmt.segment()
                if stmt.bz_from != bz:
                    note = f"field stepped {bz!r} T -> {stmt.bz_from!r} T before sweep"
                bz = stmt.bz_to
            else:
                segment = stmt.segment(bz)
            state = apply_segment(state, segment, p)
            result.elapsed += segment.duration
            record(index, segment.kind, note)

    result.final_state = state
    logger.info(f"Executed {len(program.statements)} statements over {result.elapsed:.4g} s")
    return result


__all__ = [
    "PulseProgram", "InitStatement", "SetFieldStatement", "PulseStatement", "SweepStatement",
    "WaitStatement", "MeasureStatement", "parse", "serialize", "validate", "execute",
    "parse_state_spec", "state_from_spec", "decoherence_time",
]
