import math

import numpy as np
import pytest

from core.config   import SystemParams
from core.dynamics import (ControlSegment, esr_pulse, evolve, lz_adiabaticity, lz_numeric,
                           lz_probability, propagate_hold, resonant_column, sweep_field,
                           sweep_through_crossing, tunnel_oscillation)
from core.errors   import NoResonanceError, ParameterError, ProtocolError
from core.spectrum import find_crossing, transition_table
from core.spinops  import QuantumState
from core.units    import HBAR, K_B, MU_B, kelvin_to_mhz

# lambda ~ 490: the sweep is deep in the adiabatic regime
FAST_RATE, FAST_GAP = 1e-3, 1e-5


def rate_for(adiabaticity, gap, delta_m=20, g2=2.0):
    """Sweep rate giving pi Delta^2 / (2 hbar v) = adiabaticity."""
    energy = gap * K_B
    return math.pi * energy ** 2 / (2 * HBAR * g2 * MU_B * delta_m * adiabaticity)


@pytest.fixture
def carrier_m10(params):
    return abs(transition_table(params, 0.05)[0][2])


def test_hold_zero_time_is_identity(params):
    state = QuantumState.from_components([(0.6, (1.5, 10)), (0.8j, (-0.5, -10))])
    out = propagate_hold(state, params, 0.05, 0.0)
    np.testing.assert_array_equal(out.amplitudes, state.amplitudes)


def test_diagonal_hold_only_adds_phases(params):
    state = QuantumState.from_components([(1, (1.5, 10)), (1, (0.5, -3))])
    out = propagate_hold(state, params, 0.05, 2e-9)
    np.testing.assert_allclose(out.populations(), state.populations(), atol=1e-15)
    assert out.norm() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ParameterError):
        propagate_hold(state, params, 0.05, -1e-9)
    with pytest.raises(ParameterError):
        propagate_hold(state, params, 0.05, 1e-9, model="adiabatic")


def test_full_hold_leakage_is_second_order(params):
    # strongest leak from |3/2,10> is to |1/2,9>: V ~ 0.1 K against a 5.2 K spacing
    out = propagate_hold(QuantumState.basis(1.5, 10), params, 0.05, 1e-9, model="full")
    assert out.norm() == pytest.approx(1.0, abs=1e-9)
    leak = 1.0 - out.population(1.5, 10)
    assert 0.0 < leak < 5e-3


@pytest.mark.parametrize("model, atol", [("diagonal", 1e-10), ("full", 1e-9)])
def test_holds_compose(params, model, atol):
    state = QuantumState.from_components([(0.6, (1.5, 10)), (0.8j, (-0.5, -10)), (0.3, (0.5, 2))])
    t1, t2 = 0.7e-9, 1.6e-9
    stepped = propagate_hold(propagate_hold(state, params, 0.05, t1, model), params, 0.05, t2, model)
    direct = propagate_hold(state, params, 0.05, t1 + t2, model)
    np.testing.assert_allclose(stepped.amplitudes, direct.amplitudes, atol=atol)


def test_ideal_pi_pulse_flips_resonant_column(params, carrier_m10):
    out = esr_pulse(QuantumState.basis(1.5, 10), params, 0.05, carrier_m10, math.pi)
    assert out.amplitude(-1.5, 10) == pytest.approx(1j, abs=1e-10)

    spectator = QuantumState.basis(1.5, -10)
    untouched = esr_pulse(spectator, params, 0.05, carrier_m10, math.pi)
    np.testing.assert_array_equal(untouched.amplitudes, spectator.amplitudes)


def test_half_pi_pulse_splits_population(params, carrier_m10):
    out = esr_pulse(QuantumState.basis(0.5, 10), params, 0.05, carrier_m10, math.pi / 2)
    assert out.population(0.5, 10) < 1.0
    assert out.norm() == pytest.approx(1.0, abs=1e-12)


def test_detuned_pulse_off_resonant_error():
    slow = SystemParams(rabi_rad_per_s=2 * math.pi * 1e6)
    p = SystemParams()
    carrier = abs(transition_table(p, 0.05)[0][2])
    state = QuantumState.from_components([(1, (1.5, 10)), (1, (1.5, -10))])
    out = esr_pulse(state, slow, 0.05, carrier, math.pi, mode="detuned")
    assert out.population(-1.5, 10) == pytest.approx(0.5, abs=1e-9)
    assert 0.5 - out.population(1.5, -10) < 1e-3
    assert out.norm() == pytest.approx(1.0, abs=1e-9)


def test_resonant_column_errors(params):
    assert resonant_column(params, 0.05, abs(transition_table(params, 0.05)[3][2])) == 7
    with pytest.raises(NoResonanceError, match="no resonant transition"):
        resonant_column(params, 0.05, 850.0)
    # at the n = 3/2 crossing omega = 1.5 J, so columns m = 1 and m = 2 sit at the same |freq|
    crossing = find_crossing((1.5, -10), (1.5, 10), params)
    with pytest.raises(NoResonanceError):
        resonant_column(params, crossing.bz_star, kelvin_to_mhz(0.5 * params.j_eff))


def test_lz_probability_limits(params):
    assert lz_probability(0.0, 1.0, 20, params) == 0.0
    assert lz_probability(1e-6, 1e-12, 20, params) == pytest.approx(1.0)
    assert lz_probability(1e-6, math.inf, 20, params) == 0.0
    rate = rate_for(math.log(2), 1e-6)
    assert lz_adiabaticity(1e-6, rate, 20, params) == pytest.approx(math.log(2))
    assert lz_probability(1e-6, rate, 20, params) == pytest.approx(0.5)
    with pytest.raises(ParameterError):
        lz_probability(1e-6, 0.0, 20, params)
    with pytest.raises(ParameterError):
        lz_probability(1e-6, 1.0, 0, params)


def test_lz_numeric_matches_closed_form_midpoint(params):
    rate = rate_for(math.log(2), 1e-6)
    assert lz_numeric(1e-6, rate, 20, params) == pytest.approx(0.5, abs=0.01)


def test_lz_numeric_edge_cases(params):
    assert lz_numeric(0.0, 1e-4, 20, params) == pytest.approx(0.0, abs=1e-6)
    assert lz_numeric(1e-6, rate_for(12.0, 1e-6), 20, params) >= 0.9999
    with pytest.raises(ParameterError):
        lz_numeric(1e-6, 1e-4, 20, params, window=1e-9)


def test_sweep_through_crossing_transfers_magnetization(params):
    crossing = find_crossing((1.5, -10), (1.5, 10), params)
    state = QuantumState.from_components([(1, (1.5, -10)), (1, (0.5, -10))])
    out = sweep_through_crossing(state, crossing, FAST_RATE, params, gap=FAST_GAP)
    assert out.population(1.5, 10) == pytest.approx(0.5, abs=1e-9)
    assert out.population(0.5, -10) == pytest.approx(0.5, abs=1e-12)
    assert out.norm() == pytest.approx(1.0, abs=1e-9)


def test_instantaneous_sweep_is_diabatic(params):
    crossing = find_crossing((1.5, -10), (1.5, 10), params)
    out = sweep_through_crossing(QuantumState.basis(1.5, -10), crossing, math.inf, params)
    assert out.population(1.5, -10) == pytest.approx(1.0)


def test_higher_order_crossing_is_rejected(params):
    crossing = find_crossing((1.5, 10), (0.5, -10), params)
    with pytest.raises(ProtocolError):
        sweep_through_crossing(QuantumState.basis(1.5, 10), crossing, 1e-3, params)


@pytest.mark.parametrize("bz_from, bz_to", [(0.0, 0.025), (0.025, 0.0)])
def test_sweep_field_crosses_both_first_order_points(params, bz_from, bz_to):
    start_m = -10 if bz_from < bz_to else 10
    state = QuantumState.from_components([(1, (1.5, start_m)), (1, (0.5, start_m))])
    out = sweep_field(state, bz_from, bz_to, FAST_RATE, params, gap=FAST_GAP)
    assert out.population(1.5, -start_m) == pytest.approx(0.5, abs=1e-9)
    assert out.population(0.5, -start_m) == pytest.approx(0.5, abs=1e-9)


def test_tunnel_oscillation():
    delta = 1e-6
    half_period = math.pi * HBAR / (delta * K_B)
    up, down = tunnel_oscillation(delta, half_period)
    assert up == pytest.approx(1.0)
    assert down == pytest.approx(0.0, abs=1e-12)
    assert tunnel_oscillation(delta, 0.0) == (0.0, 1.0)


def test_control_segment_invariants():
    sweep = ControlSegment.sweep(0.018, 0.021, 0.001)
    assert sweep.duration == pytest.approx(3.0)
    with pytest.raises(ParameterError):
        ControlSegment(kind="field_sweep", duration=1.0, bz_from=0.018, bz_to=0.021, rate=0.001)
    with pytest.raises(ParameterError):
        ControlSegment.hold(0.05, 0.0)
    with pytest.raises(ParameterError):
        ControlSegment.sweep(0.02, 0.02, 0.001)
    pulse = ControlSegment.pulse(0.05, 2246.78, 2 * math.pi * 30e6, math.pi)
    assert pulse.duration == pytest.approx(1 / 60e6)


def test_evolve_records_every_segment(params, carrier_m10):
    segments = [
        ControlSegment.pulse(0.05, carrier_m10, params.rabi, math.pi),
        ControlSegment.wait(0.05, 1e-9),
        ControlSegment.sweep(0.0175, 0.0215, FAST_RATE, gap=FAST_GAP),
    ]
    result = evolve(QuantumState.basis(1.5, -10), segments, params)
    assert len(result.records) == 3
    assert result.elapsed == pytest.approx(sum(s.duration for s in segments))
    assert [r.kind for r in result.records] == ["esr_pulse", "wait", "field_sweep"]
    assert result.records[0].populations == {"|3/2,-10>": pytest.approx(1.0)}
    assert result.final_state.population(1.5, 10) == pytest.approx(1.0, abs=1e-9)
