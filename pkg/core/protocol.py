#!/usr/bin/env python3
"""
Gate-level protocol: CNOT21 by selective ESR, CNOT12 by a selective field sweep,
their SWAP composition, Fe8 preparation, readout and the decoherence budget.

Logical mapping: the fullerene's bit 0 is the encoding's positive projection
(+3/2 outer, +1/2 inner); the Fe8 register reads 0 for |+10> and 1 for |-10>.
"""

import math
from dataclasses import dataclass
from enum        import Enum
from typing      import Callable, Dict, List, Literal, NamedTuple, Optional, Tuple

import numpy as np
from loguru   import logger
from pydantic import BaseModel, ConfigDict, Field

from core.config      import Config, SystemParams
from core.dynamics    import (esr_pulse, lz_probability, population_record,
                              resonant_column, sweep_through_crossing,
                              tunnel_oscillation)
from core.errors      import NonSelectiveSweepError, ParameterError, ProtocolError
from core.hamiltonian import weak_coupling_ratio
from core.spectrum    import enumerate_crossings, find_crossing, transition_freq
from core.spinops     import (PRODUCT_LABELS, QuantumState, format_label,
                              index_of, low_lying_labels)
from core.units       import HBAR, K_B, field_to_zeeman, kelvin_to_mhz, require_positive

FE8_LEVELS = (10, -10)


class QubitEncoding(str, Enum):
    INNER = "inner"
    OUTER = "outer"

    @property
    def levels(self) -> Tuple[float, float]:
        """Fullerene projections (logical 0, logical 1)."""
        return (0.5, -0.5) if self is QubitEncoding.INNER else (1.5, -1.5)

    @property
    def control_n(self) -> float:
        return self.levels[0]


def logical_labels(enc: QubitEncoding) -> List[Tuple[float, int]]:
    """Basis labels of |f, e> ordered by (fullerene bit, Fe8 bit)."""
    return [(n, m) for n in enc.levels for m in FE8_LEVELS]


def logical_state(enc: QubitEncoding, fullerene_bit: int, fe8_bit: int) -> QuantumState:
    return QuantumState.basis(enc.levels[fullerene_bit], FE8_LEVELS[fe8_bit])


@dataclass(frozen=True)
class Gate:
    name:             str
    duration:         float
    flip_probability: float
    apply:            Callable[[QuantumState], QuantumState]
    field_range:      Optional[Tuple[float, float]] = None

    def matrix(self) -> np.ndarray:
        """8x8 action on the low-lying states (columns are inputs)."""
        labels = low_lying_labels()
        rows = [index_of(*label) for label in labels]
        out = np.zeros((len(labels), len(labels)), dtype=complex)
        for col, label in enumerate(labels):
            out[:, col] = self.apply(QuantumState.basis(*label)).amplitudes[rows]
        return out


class SwapControls(BaseModel):
    """Experimental knobs of the gate sequence."""

    model_config = ConfigDict(frozen=True)

    mode:      Literal["ideal", "detuned"] = "ideal"
    pulse_bz:  float = Field(Config.PULSE_BZ, gt=0)
    rate:      float = Field(1e-4, gt=0)
    delta:     Optional[float] = Field(None, gt=0)
    window:    float = Field(Config.SWEEP_HALF_WINDOW, gt=0)
    control_m: Literal[-10, 10] = 10


class BudgetResult(BaseModel):
    convention:      Literal["angular", "strict_si"]
    rabi_value:      float
    linewidth_value: float
    t0:              float
    t0_max:          float
    feasible:        bool
    ok:              bool


class GateRecord(BaseModel):
    name:             str
    duration:         float
    flip_probability: float


class ReadoutResult(BaseModel):
    sign_plus:  float
    sign_minus: float
    unresolved: float
    fullerene:  Dict[int, float]

    @property
    def bits(self) -> Dict[int, float]:
        """Fe8 logical bit distribution: sign + reads 0."""
        return {0: self.sign_plus, 1: self.sign_minus}


class ProtocolReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    operation:           str
    encoding:            QubitEncoding
    final_state:         QuantumState = Field(exclude=True)
    final_populations:   Dict[str, float]
    fidelity:            float
    population_fidelity: float
    total_duration:      float
    t0:                  float
    budget:              BudgetResult
    budget_ok:           bool
    gates:               List[GateRecord]
    readout:             ReadoutResult
    weak_coupling_ratio: Optional[float]
    weak_coupling_ok:    bool
    warnings:            List[str] = []


class TruthTableRow(BaseModel):
    fullerene_bit:       int
    fe8_bit:             int
    expected:            Tuple[int, int]
    outcome:             Dict[str, float]
    population_fidelity: float
    correct:             bool


class Preparation(NamedTuple):
    hold_time:  float
    population: float


def cnot21(enc: QubitEncoding, control_m: int, p: SystemParams,
           bz: float = Config.PULSE_BZ, mode: Literal["ideal", "detuned"] = "ideal",
           rabi: Optional[float] = None) -> Gate:
    """pi pulse at |-omega + control_m J|: flips the fullerene iff Fe8 is |control_m>."""
    if control_m not in FE8_LEVELS:
        raise ParameterError(f"control_m must be +10 or -10, got {control_m}")
    rabi = p.rabi if rabi is None else rabi
    require_positive("rabi", rabi)

    freq = kelvin_to_mhz(transition_freq(control_m, field_to_zeeman(bz, p.g1), p.j_eff))
    carrier = abs(freq)
    if carrier == 0:
        raise ParameterError(f"column m={control_m} has zero transition frequency at {bz} T")
    if resonant_column(p, bz, carrier, rabi) != control_m:
        raise ParameterError(f"carrier {carrier:.6g} MHz does not resolve column m={control_m}")

    def apply(state: QuantumState) -> QuantumState:
        return esr_pulse(state, p, bz, carrier, math.pi, mode=mode, rabi=rabi)

    return Gate(name=f"CNOT21[{enc.value},m={control_m:+d}]", duration=math.pi / rabi,
                flip_probability=1.0, apply=apply, field_range=(bz, bz))


def cnot12(enc: QubitEncoding, p: SystemParams, rate: float,
           delta: Optional[float] = None,
           window: float = Config.SWEEP_HALF_WINDOW) -> Gate:
    """Sweep through the (control_n, -10)/(control_n, +10) crossing only."""
    require_positive("sweep rate", rate)
    delta = p.tunnel_gap if delta is None else delta
    require_positive("delta", delta)

    n = enc.control_n
    crossing = find_crossing((n, -10), (n, 10), p)
    lo, hi = crossing.bz_star - window, crossing.bz_star + window
    nearby = enumerate_crossings(p, (lo, hi), low_lying_labels())
    first_order = [c for c in nearby if c.order == "first_order"]
    if len(first_order) > 1:
        others = ", ".join(f"{c.bz_star:.6g} T" for c in first_order)
        raise NonSelectiveSweepError(f"non-selective sweep: [{lo:.6g}, {hi:.6g}] T covers "
                                     f"first-order crossings at {others}")
    for c in nearby:
        if c.order == "higher_order":
            logger.warning(f"CNOT12 window contains higher-order crossing "
                           f"{format_label(c.state_a)}/{format_label(c.state_b)} at {c.bz_star:.6g} T")

    prob = lz_probability(delta, rate, 20, p)
    duration = 0.0 if math.isinf(rate) else 2 * window / rate
    logger.debug(f"CNOT12[{enc.value}] at {crossing.bz_star:.6g} T: P_flip={prob:.6f}, T0={duration:.3e} s")

    def apply(state: QuantumState) -> QuantumState:
        return sweep_through_crossing(state, crossing, rate, p, window=window, gap=delta)

    return Gate(name=f"CNOT12[{enc.value}]", duration=duration,
                flip_probability=prob, apply=apply, field_range=(lo, hi))


def timing_budget(rabi_value: float, linewidth_value: float, t0: float,
                  convention: Literal["angular", "strict_si"] = "angular") -> BudgetResult:
    """Longest sweep time T0 that fits the pulse inside the decoherence time.

    angular: both MHz-labelled values are read as x*1e6 rad/s and times are 2pi/x.
    strict_si: both are ordinary frequencies and times are 1/nu.
    """
    require_positive("rabi", rabi_value)
    require_positive("linewidth", linewidth_value)
    require_positive("t0", t0, strict=False)

    if convention == "angular":
        t0_max = 2 * math.pi / (linewidth_value * 1e6) - 2 * math.pi / (rabi_value * 1e6)
    elif convention == "strict_si":
        t0_max = 1 / (linewidth_value * 1e6) - 1 / (rabi_value * 1e6)
    else:
        raise ParameterError(f"Unknown budget convention '{convention}'")

    feasible = t0_max > 0
    if not feasible:
        logger.warning(f"Timing budget infeasible: linewidth {linewidth_value} >= rabi {rabi_value}")
    return BudgetResult(convention=convention, rabi_value=rabi_value,
                        linewidth_value=linewidth_value, t0=t0, t0_max=t0_max,
                        feasible=feasible, ok=feasible and t0 <= t0_max)


def fe8_signs(state: QuantumState) -> Tuple[float, float, float]:
    """Fe8 magnetization marginal (m > 0, m < 0, m = 0)."""
    pops = state.populations()
    plus = minus = zero = 0.0
    for (_, m), pop in zip(state.labels, pops):
        if m > 0:
            plus += pop
        elif m < 0:
            minus += pop
        else:
            zero += pop
    return float(plus), float(minus), float(zero)


def readout_map(state: QuantumState, enc: QubitEncoding) -> ReadoutResult:
    """Ideal micro-SQUID sign projection of the Fe8 magnetization."""
    pops = state.populations()
    plus, minus, zero = fe8_signs(state)
    fullerene = {bit: float(sum(pops[i] for i, (n, _) in enumerate(state.labels) if n == level))
                 for bit, level in enumerate(enc.levels)}
    if zero > 1e-12:
        logger.warning(f"Readout: weight {zero:.3e} on m=0 is unresolved")
    return ReadoutResult(sign_plus=plus, sign_minus=minus, unresolved=zero, fullerene=fullerene)


def _logical_components(state: QuantumState, enc: QubitEncoding) -> Dict[Tuple[int, int], complex]:
    comps = {(f, e): state.amplitude(enc.levels[f], FE8_LEVELS[e]) for f in (0, 1) for e in (0, 1)}
    weight = sum(abs(c) ** 2 for c in comps.values())
    if abs(weight - 1.0) > Config.NORM_TOL:
        raise ProtocolError(f"input has weight {1.0 - weight:.3e} outside the {enc.value} logical subspace")
    return comps


def _from_logical(comps: Dict[Tuple[int, int], complex], enc: QubitEncoding) -> QuantumState:
    amps = np.zeros(len(PRODUCT_LABELS), dtype=complex)
    for (f, e), c in comps.items():
        amps[index_of(enc.levels[f], FE8_LEVELS[e])] += c
    return QuantumState(amps)


def ideal_swap(state: QuantumState, enc: QubitEncoding) -> QuantumState:
    """Phase-free exchange |f, e> -> |e, f> of the logical basis."""
    comps = _logical_components(state, enc)
    return _from_logical({(e, f): c for (f, e), c in comps.items()}, enc)


def ideal_convert(state: QuantumState, enc: QubitEncoding) -> QuantumState:
    """Phase-free CNOT12: the Fe8 bit flips iff the fullerene bit is 0."""
    comps = _logical_components(state, enc)
    return _from_logical({(f, e ^ (1 - f)): c for (f, e), c in comps.items()}, enc)


def state_fidelity(ideal: QuantumState, actual: QuantumState) -> float:
    return float(abs(ideal.overlap(actual)) ** 2)


def population_fidelity(ideal: QuantumState, actual: QuantumState) -> float:
    """Classical (Bhattacharyya) fidelity of the two population vectors."""
    return float(np.sum(np.sqrt(ideal.populations() * actual.populations())) ** 2)


def _report(operation: str, enc: QubitEncoding, final: QuantumState, ideal: QuantumState,
            gates: List[Gate], t0: float, p: SystemParams, warnings: List[str]) -> ProtocolReport:
    budget = timing_budget(p.rabi_mhz, p.linewidth, t0, p.budget_convention)
    ratio = max((weak_coupling_ratio(p, *g.field_range) for g in gates if g.field_range), default=0.0)
    coupling_ok = ratio <= Config.WEAK_COUPLING_RATIO
    if not coupling_ok:
        logger.warning(f"{operation}: |J|/min(|omega|, D) reaches {ratio:.3g}, above "
                       f"{Config.WEAK_COUPLING_RATIO}; the diagonal model is only qualitative there")
    return ProtocolReport(
        operation           = operation,
        encoding            = enc,
        final_state         = final,
        final_populations   = population_record(final),
        fidelity            = state_fidelity(ideal, final),
        population_fidelity = population_fidelity(ideal, final),
        total_duration      = sum(g.duration for g in gates),
        t0                  = t0,
        budget              = budget,
        budget_ok           = budget.ok,
        gates               = [GateRecord(name=g.name, duration=g.duration,
                                          flip_probability=g.flip_probability) for g in gates],
        readout             = readout_map(final, enc),
        weak_coupling_ratio = ratio if math.isfinite(ratio) else None,
        weak_coupling_ok    = coupling_ok,
        warnings            = warnings,
    )


def swap(enc: QubitEncoding, input_state: QuantumState, p: SystemParams,
         controls: Optional[SwapControls] = None) -> ProtocolReport:
    """CNOT21 . CNOT12 . CNOT21; duration 2pi/Omega + T0."""
    controls = controls or SwapControls()
    ideal = ideal_swap(input_state, enc)

    pulse = cnot21(enc, controls.control_m, p, controls.pulse_bz, controls.mode)
    sweep = cnot12(enc, p, controls.rate, controls.delta, controls.window)
    gates = [pulse, sweep, pulse]

    state = input_state
    for gate in gates:
        state = gate.apply(state)

    report = _report("swap", enc, state, ideal, gates, sweep.duration, p, [])
    logger.info(f"SWAP[{enc.value}, {controls.mode}]: population fidelity "
                f"{report.population_fidelity:.9f}, duration {report.total_duration:.3e} s")
    return report


def swap_truth_table(enc: QubitEncoding, p: SystemParams,
                     controls: Optional[SwapControls] = None) -> List[TruthTableRow]:
    """SWAP applied to the four logical product states."""
    rows = []
    for f in (0, 1):
        for e in (0, 1):
            report = swap(enc, logical_state(enc, f, e), p, controls)
            final = report.final_state
            outcome = {format_label(label): final.population(*label) for label in logical_labels(enc)}
            rows.append(TruthTableRow(
                fullerene_bit       = f,
                fe8_bit             = e,
                expected            = (e, f),
                outcome             = outcome,
                population_fidelity = report.population_fidelity,
                correct             = report.population_fidelity > 1 - 1e-9,
            ))
    return rows


def convert_only(enc: QubitEncoding, input_state: QuantumState, p: SystemParams,
                 controls: Optional[SwapControls] = None) -> ProtocolReport:
    """Single CNOT12 copying the fullerene bit onto the Fe8 magnetization."""
    controls = controls or SwapControls()
    warnings = []

    fe8 = {m: sum(input_state.population(n, m) for n in enc.levels) for m in FE8_LEVELS}
    if max(fe8.values()) < 1 - Config.NORM_TOL:
        message = (f"Fe8 is not prepared in a basis state (P(+10)={fe8[10]:.4f}, "
                   f"P(-10)={fe8[-10]:.4f}); conversion fidelity is reduced")
        logger.warning(message)
        warnings.append(message)

    ideal = ideal_convert(input_state, enc)
    sweep = cnot12(enc, p, controls.rate, controls.delta, controls.window)
    final = sweep.apply(input_state)
    return _report("convert", enc, final, ideal, [sweep], sweep.duration, p, warnings)


def prepare_fe8(target: int, delta: Optional[float], p: SystemParams,
                timing_error: float = 0.0) -> Preparation:
    """Dwell at degeneracy that moves the thermal start p.fe8_start_m to ``target``."""
    if target not in FE8_LEVELS:
        raise ParameterError(f"target must be +10 or -10, got {target}")
    delta = p.tunnel_gap if delta is None else delta
    require_positive("delta", delta)

    if target == p.fe8_start_m:
        return Preparation(hold_time=0.0, population=1.0)

    hold = math.pi * HBAR / (delta * K_B) * (1.0 + timing_error)
    transferred, _ = tunnel_oscillation(delta, hold)
    logger.info(f"Fe8 preparation {p.fe8_start_m:+d} -> {target:+d}: hold {hold:.4e} s, "
                f"population {transferred:.6f}")
    return Preparation(hold_time=hold, population=transferred)


__all__ = [
    "QubitEncoding", "Gate", "SwapControls", "BudgetResult", "ProtocolReport", "ReadoutResult",
    "TruthTableRow", "Preparation", "cnot21", "cnot12", "swap", "swap_truth_table",
    "convert_only", "prepare_fe8", "timing_budget", "readout_map", "fe8_signs", "ideal_swap",
    "ideal_convert", "logical_state", "logical_labels",
]
