#!/usr/bin/env python3
"""
Time evolution of the fullerene + Fe8 pair.

Free evolution under the diagonal or full Hamiltonian, selective ESR pulses in
the rotating frame, Landau-Zener field sweeps with a numerical TDSE oracle,
and the zero-field Fe8 tunnel oscillation used to prepare the register.
"""

import math
from dataclasses import dataclass, field
from typing      import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from loguru          import logger
from scipy.integrate import solve_ivp

from core.config      import Config, SystemParams
from core.errors      import (ConvergenceError, NoResonanceError, ParameterError,
                              ProtocolError)
from core.hamiltonian import S1, build_hc, build_total
from core.spectrum    import CrossingPoint, enumerate_crossings, transition_freq
from core.spinops     import (M_VALUES, N_VALUES, QuantumState, SpinMatrix,
                              expm_hermitian, format_label, index_of,
                              low_lying_labels)
from core.units       import (HBAR, K_B, KB_OVER_HBAR, MU_B, field_to_zeeman,
                              kelvin_to_mhz, require_positive)

SegmentKind = Literal["hold", "esr_pulse", "field_sweep", "wait"]


@dataclass(frozen=True)
class ControlSegment:
    """One timed control step. Fields not used by a kind stay None."""
    kind:     SegmentKind
    duration: float
    bz:       Optional[float] = None
    carrier:  Optional[float] = None   # MHz
    rabi:     Optional[float] = None   # rad/s
    phase:    float = 0.0              # rad
    angle:    Optional[float] = None   # rad
    mode:     Literal["ideal", "detuned"] = "ideal"
    bz_from:  Optional[float] = None
    bz_to:    Optional[float] = None
    rate:     Optional[float] = None   # T/s
    gap:      Optional[float] = None   # K

    def __post_init__(self):
        if self.kind == "field_sweep":
            require_positive("sweep rate", self.rate)
            span = abs(self.bz_to - self.bz_from)
            if span == 0:
                raise ParameterError("field sweep needs distinct bz_from and bz_to")
            if math.isfinite(self.rate) and abs(self.duration * self.rate - span) > 1e-9:
                raise ParameterError(
                    f"sweep duration {self.duration} s inconsistent with {span} T at {self.rate} T/s"
                )
        else:
            require_positive(f"{self.kind} duration", self.duration)

    @classmethod
    def hold(cls, bz: float, duration: float) -> "ControlSegment":
        return cls(kind="hold", duration=duration, bz=bz)

    @classmethod
    def wait(cls, bz: float, duration: float) -> "ControlSegment":
        return cls(kind="wait", duration=duration, bz=bz)

    @classmethod
    def pulse(cls, bz: float, carrier: float, rabi: float, angle: float,
              phase: float = 0.0, mode: str = "ideal") -> "ControlSegment":
        require_positive("rabi", rabi)
        require_positive("angle", angle)
        return cls(kind="esr_pulse", duration=angle / rabi, bz=bz, carrier=carrier,
                   rabi=rabi, phase=phase, angle=angle, mode=mode)

    @classmethod
    def sweep(cls, bz_from: float, bz_to: float, rate: float,
              gap: Optional[float] = None) -> "ControlSegment":
        require_positive("sweep rate", rate)
        duration = abs(bz_to - bz_from) / rate
        return cls(kind="field_sweep", duration=duration, bz=bz_to, bz_from=bz_from,
                   bz_to=bz_to, rate=rate, gap=gap)


@dataclass(frozen=True)
class SegmentRecord:
    index:       int
    kind:        str
    elapsed:     float
    bz:          Optional[float]
    populations: Dict[str, float]
    note:        str = ""


@dataclass
class EvolutionResult:
    final_state: QuantumState
    elapsed:     float = 0.0
    records:     List[SegmentRecord] = field(default_factory=list)
    measurement: Optional[Dict[str, float]] = None


def population_record(state: QuantumState, threshold: float = 1e-12) -> Dict[str, float]:
    """Non-negligible populations keyed by ket label."""
    pops = state.populations()
    return {format_label(state.labels[i]): float(pops[i])
            for i in np.flatnonzero(pops > threshold)}


def check_norm(state: QuantumState, context: str) -> QuantumState:
    drift = abs(state.norm() - 1.0)
    if drift > Config.NORM_TOL:
        logger.warning(f"Norm drift {drift:.3e} after {context}")
    return state


def propagate_hold(state: QuantumState, p: SystemParams, bz: float, t: float,
                   model: Literal["diagonal", "full"] = "diagonal",
                   include_transverse: bool = False) -> QuantumState:
    """exp(-i H t / hbar) at fixed field; H in K is converted by k_B/hbar."""
    require_positive("hold time", t, strict=False)
    if t == 0:
        return state
    if model == "diagonal":
        phases = np.exp(-1j * build_hc(p, bz).diagonal().real * KB_OVER_HBAR * t)
        return check_norm(QuantumState(state.amplitudes * phases, state.labels), "diagonal hold")
    if model != "full":
        raise ParameterError(f"Unknown propagation model '{model}'")
    h = build_total(p, bz, include_transverse=include_transverse)
    u = expm_hermitian(h, KB_OVER_HBAR * t)
    return check_norm(u @ state, "full hold")


def _column_frequencies(p: SystemParams, bz: float) -> np.ndarray:
    """|-omega + m J| in MHz for m = 10..-10."""
    omega = field_to_zeeman(bz, p.g1)
    return np.array([abs(kelvin_to_mhz(transition_freq(m, omega, p.j_eff))) for m in M_VALUES])


def resonant_column(p: SystemParams, bz: float, carrier: float,
                    rabi: Optional[float] = None) -> int:
    """The Fe8 projection m addressed by an ESR carrier (MHz) at field bz."""
    rabi = p.rabi if rabi is None else rabi
    freqs = _column_frequencies(p, bz)
    distance = np.abs(freqs - carrier)
    best = int(np.argmin(distance))
    tolerance = max(rabi / (2 * math.pi * 1e6), p.linewidth)

    if distance[best] > tolerance:
        raise NoResonanceError(
            f"no resonant transition: carrier {carrier:.6g} MHz is {distance[best]:.6g} MHz "
            f"from the nearest column (tolerance {tolerance:.6g} MHz)"
        )
    ties = np.flatnonzero(np.abs(distance - distance[best]) <= 1e-9 * max(1.0, carrier))
    if ties.size > 1:
        columns = [M_VALUES[i] for i in ties]
        raise NoResonanceError(f"no resonant transition: carrier {carrier:.6g} MHz "
                               f"addresses columns {columns} equally")
    return M_VALUES[best]


def _pulse_generator(phase: float) -> SpinMatrix:
    return math.cos(phase) * S1.sx + math.sin(phase) * S1.sy


def esr_pulse(state: QuantumState, p: SystemParams, bz: float, carrier: float,
              angle: float, phase: float = 0.0,
              mode: Literal["ideal", "detuned"] = "ideal",
              rabi: Optional[float] = None) -> QuantumState:
    """Selective spin-3/2 rotation in the rotating frame.

    ideal: exp(-i angle (cos(phase) Sx + sin(phase) Sy)) on the one resonant
    Fe8 column, all other columns untouched. detuned: every column evolves for
    angle/rabi under rabi*(...) + delta_m Sz with its own detuning delta_m.
    """
    rabi = p.rabi if rabi is None else rabi
    require_positive("angle", angle)
    require_positive("rabi", rabi)

    grid = state.amplitudes.reshape(len(N_VALUES), len(M_VALUES)).copy()
    generator = _pulse_generator(phase)

    if mode == "ideal":
        m = resonant_column(p, bz, carrier, rabi)
        col = M_VALUES.index(m)
        grid[:, col] = expm_hermitian(generator, angle).data @ grid[:, col]
        logger.debug(f"Ideal ESR pulse angle={angle:.6g} rad on column m={m}")
    elif mode == "detuned":
        duration = angle / rabi
        for col, freq in enumerate(_column_frequencies(p, bz)):
            detuning = 2 * math.pi * (carrier - freq) * 1e6
            h = rabi * generator + detuning * S1.sz
            grid[:, col] = expm_hermitian(h, duration).data @ grid[:, col]
        logger.debug(f"Detuned ESR pulse {duration:.3e} s at carrier {carrier:.6g} MHz")
    else:
        raise ParameterError(f"Unknown pulse mode '{mode}'")

    return check_norm(QuantumState(grid.reshape(-1), state.labels), "ESR pulse")


def _sweep_speed(rate: float, delta_m: int, p: SystemParams) -> float:
    """Diabatic energy-difference sweep rate v = g2 mu_B |dm| dB/dt in J/s."""
    return p.g2 * MU_B * abs(delta_m) * rate


def lz_adiabaticity(gap: float, rate: float, delta_m: int, p: SystemParams) -> float:
    """pi Delta^2 / (2 hbar v); zero at gap 0 or infinite rate."""
    require_positive("gap", gap, strict=False)
    require_positive("sweep rate", rate)
    if delta_m == 0:
        raise ParameterError("delta_m must be non-zero for a field sweep")
    if gap == 0 or math.isinf(rate):
        return 0.0
    energy = gap * K_B
    return math.pi * energy ** 2 / (2 * HBAR * _sweep_speed(rate, delta_m, p))


def lz_probability(gap: float, rate: float, delta_m: int, p: SystemParams) -> float:
    """Landau-Zener flip probability 1 - exp(-pi Delta^2 / (2 hbar v))."""
    return -math.expm1(-lz_adiabaticity(gap, rate, delta_m, p))


def _lower_adiabatic(eps: float) -> np.ndarray:
    _, vectors = np.linalg.eigh(0.5 * np.array([[eps, 1.0], [1.0, -eps]]))
    return vectors[:, 0].astype(complex)


def lz_numeric(gap: float, rate: float, delta_m: int, p: SystemParams,
               window: Optional[float] = None) -> float:
    """TDSE oracle for :func:`lz_probability`.

    Integrates H = 1/2 [[v t, Delta], [Delta, -v t]] in units of the gap, with
    half-window ``window`` in tesla (default LZ_TRANSITION_WIDTHS transition
    widths). The run starts and is projected in the adiabatic basis so the
    finite window adds no 1/t oscillation. Tolerances tighten tenfold until two
    runs agree within LZ_TOL.
    """
    require_positive("gap", gap, strict=False)
    require_positive("sweep rate", rate)
    if delta_m == 0:
        raise ParameterError("delta_m must be non-zero for a field sweep")
    if gap == 0 or math.isinf(rate):
        return 0.0

    energy = gap * K_B
    lam = energy ** 2 / (HBAR * _sweep_speed(rate, delta_m, p))

    if window is None:
        widths = Config.LZ_TRANSITION_WIDTHS * max(1.0, 1.0 / math.sqrt(lam))
    else:
        require_positive("window", window)
        widths = p.g2 * MU_B * abs(delta_m) * window / energy
    if widths < 20:
        raise ParameterError(f"window spans only {widths:.3g} gap widths; at least 20 are needed")

    tau_max = widths * lam
    start = _lower_adiabatic(-widths)
    final_lower = _lower_adiabatic(widths)

    def rhs(tau, psi):
        eps = tau / lam
        return -0.5j * np.array([eps * psi[0] + psi[1], psi[0] - eps * psi[1]])

    rtol, previous = 1e-6, None
    for attempt in range(Config.LZ_MAX_REFINEMENTS + 1):
        sol = solve_ivp(rhs, (-tau_max, tau_max), start, method="DOP853",
                        rtol=rtol, atol=rtol * 1e-2)
        if not sol.success:
            raise ConvergenceError("TDSE integration failed", {"message": sol.message, "rtol": rtol})
        prob = float(abs(np.vdot(final_lower, sol.y[:, -1])) ** 2)
        logger.debug(f"lz_numeric attempt {attempt}: P={prob:.8f} rtol={rtol:.1e}")
        if previous is not None and abs(prob - previous) < Config.LZ_TOL:
            return prob
        previous, rtol = prob, rtol / 10

    raise ConvergenceError("Landau-Zener integration did not converge",
                           {"probability": previous, "rtol": rtol * 10, "lambda": lam})


def _diag_energies(p: SystemParams, bz: float) -> np.ndarray:
    return build_hc(p, bz).diagonal().real


def _free_phase(amps: np.ndarray, p: SystemParams, b0: float, b1: float, rate: float) -> np.ndarray:
    """Diagonal-model dynamical phase of a linear ramp b0 -> b1 (exact for energies linear in B)."""
    if math.isinf(rate) or b0 == b1:
        return amps
    dt = abs(b1 - b0) / rate
    energies = _diag_energies(p, 0.5 * (b0 + b1))
    return amps * np.exp(-1j * energies * KB_OVER_HBAR * dt)


def _mix_pair(amps: np.ndarray, crossing: CrossingPoint, prob: float) -> np.ndarray:
    ia, ib = index_of(*crossing.state_a), index_of(*crossing.state_b)
    stay, flip = math.sqrt(1.0 - prob), math.sqrt(prob)
    a, b = amps[ia], amps[ib]
    out = amps.copy()
    out[ia] = stay * a - flip * b
    out[ib] = flip * a + stay * b
    return out


def _sweep(state: QuantumState, bz_from: float, bz_to: float, rate: float,
           p: SystemParams, crossings: Sequence[CrossingPoint], gap: float) -> QuantumState:
    amps = state.amplitudes.copy()
    current = bz_from
    for crossing in crossings:
        amps = _free_phase(amps, p, current, crossing.bz_star, rate)
        delta_m = crossing.state_a[1] - crossing.state_b[1]
        prob = lz_probability(gap, rate, delta_m, p)
        amps = _mix_pair(amps, crossing, prob)
        logger.debug(f"Crossed {format_label(crossing.state_a)}/{format_label(crossing.state_b)} "
                     f"at {crossing.bz_star:.6g} T, P_flip={prob:.6f}")
        current = crossing.bz_star
    amps = _free_phase(amps, p, current, bz_to, rate)
    return check_norm(QuantumState(amps, state.labels), "field sweep")


def sweep_through_crossing(state: QuantumState, crossing: CrossingPoint, rate: float,
                           p: SystemParams, window: float = Config.SWEEP_HALF_WINDOW,
                           gap: Optional[float] = None) -> QuantumState:
    """Sweep bz_star - window -> bz_star + window through one first-order crossing.

    The pair is mixed by a real rotation with flip probability from
    :func:`lz_probability` (Stokes phase set to zero); every component picks up
    its diagonal dynamical phase. ``gap`` defaults to the crossing's own gap, or
    ``p.tunnel_gap`` when the crossing carries none.
    """
    if crossing.order != "first_order":
        raise ProtocolError(
            f"probability model not implemented for higher-order crossing "
            f"{format_label(crossing.state_a)}/{format_label(crossing.state_b)}"
        )
    require_positive("window", window)
    if gap is None:
        gap = crossing.gap or p.tunnel_gap
    lo, hi = crossing.bz_star - window, crossing.bz_star + window
    return _sweep(state, lo, hi, rate, p, [crossing], gap)


def sweep_field(state: QuantumState, bz_from: float, bz_to: float, rate: float,
                p: SystemParams, gap: Optional[float] = None) -> QuantumState:
    """Linear sweep traversing every low-lying first-order crossing in [bz_from, bz_to] in order."""
    require_positive("sweep rate", rate)
    gap = p.tunnel_gap if gap is None else gap
    lo, hi = sorted((bz_from, bz_to))
    crossings = []
    for crossing in enumerate_crossings(p, (lo, hi), low_lying_labels()):
        if crossing.order != "first_order":
            logger.warning(f"Sweep passes higher-order crossing {format_label(crossing.state_a)}/"
                           f"{format_label(crossing.state_b)} at {crossing.bz_star:.6g} T; treated as diabatic")
            continue
        crossings.append(crossing)
    if bz_to < bz_from:
        crossings.reverse()
    return _sweep(state, bz_from, bz_to, rate, p, crossings, gap)


def tunnel_oscillation(delta: float, t: float) -> Tuple[float, float]:
    """(P(+10), P(-10)) after a dwell t at degeneracy, starting from |-10>."""
    require_positive("delta", delta)
    require_positive("time", t, strict=False)
    up = math.sin(delta * KB_OVER_HBAR * t / 2) ** 2
    return up, 1.0 - up


def apply_segment(state: QuantumState, segment: ControlSegment, p: SystemParams) -> QuantumState:
    """Dispatch one ControlSegment; wait uses the diagonal model, hold the full one."""
    if segment.kind == "wait":
        return propagate_hold(state, p, segment.bz, segment.duration, model="diagonal")
    if segment.kind == "hold":
        return propagate_hold(state, p, segment.bz, segment.duration, model="full")
    if segment.kind == "esr_pulse":
        return esr_pulse(state, p, segment.bz, segment.carrier, segment.angle,
                         phase=segment.phase, mode=segment.mode, rabi=segment.rabi)
    if segment.kind == "field_sweep":
        return sweep_field(state, segment.bz_from, segment.bz_to, segment.rate, p, gap=segment.gap)
    raise ParameterError(f"Unknown segment kind '{segment.kind}'")


def evolve(state: QuantumState, segments: Sequence[ControlSegment], p: SystemParams) -> EvolutionResult:
    """Apply segments in order, recording populations after each one."""
    result = EvolutionResult(final_state=state)
    for index, segment in enumerate(segments):
        state = apply_segment(state, segment, p)
        result.elapsed += segment.duration
        result.records.append(SegmentRecord(
            index       = index,
            kind        = segment.kind,
            elapsed     = result.elapsed,
            bz          = segment.bz,
            populations = population_record(state),
        ))
    result.final_state = state
    return result


__all__ = [
    "ControlSegment", "SegmentRecord", "EvolutionResult", "propagate_hold", "esr_pulse",
    "resonant_column", "lz_adiabaticity", "lz_probability", "lz_numeric",
    "sweep_through_crossing", "sweep_field", "tunnel_oscillation", "apply_segment", "evolve",
]
