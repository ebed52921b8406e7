import math

import numpy as np
import pytest
from pydantic import ValidationError

from core.errors   import NonSelectiveSweepError, ParameterError, ProtocolError
from core.protocol import (QubitEncoding, SwapControls, cnot12, cnot21, convert_only,
                           fe8_signs, ideal_convert, ideal_swap, logical_labels,
                           logical_state, prepare_fe8, readout_map, swap,
                           swap_truth_table, timing_budget)
from core.spinops  import QuantumState, format_label, low_lying_labels

FAST = SwapControls(rate=1e-3, delta=1e-5)


def test_encoding_levels(outer, inner):
    assert outer.levels == (1.5, -1.5)
    assert inner.levels == (0.5, -0.5)
    assert QubitEncoding("outer") is outer
    assert logical_labels(outer) == [(1.5, 10), (1.5, -10), (-1.5, 10), (-1.5, -10)]
    assert logical_state(inner, 1, 0).population(-0.5, 10) == 1.0


def test_cnot21_flips_only_the_control_column(outer, params):
    gate = cnot21(outer, 10, params)
    assert gate.duration == pytest.approx(math.pi / params.rabi)
    matrix = np.abs(gate.matrix())
    labels = low_lying_labels()
    for col, (n, m) in enumerate(labels):
        target = (-n, m) if m == 10 else (n, m)
        assert matrix[labels.index(target), col] == pytest.approx(1.0)
    np.testing.assert_allclose(matrix @ matrix.T, np.eye(8), atol=1e-12)


def test_cnot21_twice_is_a_2pi_rotation(outer, params):
    # a 2 pi rotation of a half-integer spin is -1 on the driven column, identity elsewhere
    matrix = cnot21(outer, 10, params).matrix()
    expected = np.diag([-1.0 if m == 10 else 1.0 for _, m in low_lying_labels()])
    np.testing.assert_allclose(matrix @ matrix, expected, atol=1e-12)


def test_cnot21_rejects_bad_control(outer, params):
    with pytest.raises(ParameterError):
        cnot21(outer, 9, params)


def test_cnot12_gate(outer, params):
    gate = cnot12(outer, params, rate=1e-4)
    assert gate.flip_probability == pytest.approx(1.0)
    assert gate.duration == pytest.approx(2 * 0.002 / 1e-4)
    out = gate.apply(QuantumState.basis(1.5, -10))
    assert out.population(1.5, 10) == pytest.approx(1.0, abs=1e-9)
    spectator = gate.apply(QuantumState.basis(-1.5, -10))
    assert spectator.population(-1.5, -10) == pytest.approx(1.0)


def test_cnot12_instantaneous_sweep(outer, params):
    gate = cnot12(outer, params, rate=math.inf)
    assert gate.duration == 0.0
    assert gate.flip_probability == 0.0


def test_cnot12_window_must_be_selective(outer, params):
    with pytest.raises(NonSelectiveSweepError, match="non-selective sweep"):
        cnot12(outer, params, rate=1e-4, window=0.014)


@pytest.mark.parametrize("encoding", list(QubitEncoding))
def test_swap_truth_table_is_exact(encoding, params):
    rows = swap_truth_table(encoding, params, FAST)
    assert len(rows) == 4
    for row in rows:
        assert row.correct
        assert row.population_fidelity > 1 - 1e-9
        expected = logical_labels(encoding)[2 * row.expected[0] + row.expected[1]]
        assert max(row.outcome, key=row.outcome.get) == format_label(expected)


def test_swap_of_superposition_reads_out(outer, params):
    state = QuantumState.from_components([(0.6, (1.5, -10)), (0.8, (-1.5, -10))])
    report = swap(outer, state, params, FAST)
    assert report.population_fidelity > 1 - 1e-9
    assert report.readout.sign_plus == pytest.approx(0.36, abs=1e-9)
    assert report.readout.sign_minus == pytest.approx(0.64, abs=1e-9)
    assert report.readout.bits[0] == pytest.approx(0.36, abs=1e-9)
    assert report.readout.fullerene[1] == pytest.approx(1.0, abs=1e-9)
    assert [g.name for g in report.gates] == ["CNOT21[outer,m=+10]", "CNOT12[outer]", "CNOT21[outer,m=+10]"]
    assert report.t0 == pytest.approx(4.0)
    assert not report.budget_ok


def test_swap_report_serializes_without_state(outer, params):
    report = swap(outer, logical_state(outer, 0, 1), params, FAST)
    data = report.model_dump(mode="json")
    assert "final_state" not in data
    assert data["encoding"] == "outer"
    assert data["budget"]["convention"] == "angular"
    # the CNOT12 window starts near 0.0175 T where |J| is ~0.74 of the Zeeman splitting
    assert data["weak_coupling_ok"] is False
    assert data["weak_coupling_ratio"] == pytest.approx(0.743, abs=2e-3)


def test_detuned_swap_is_close(outer, params):
    controls = SwapControls(mode="detuned", rate=1e-3, delta=1e-5)
    report = swap(outer, logical_state(outer, 0, 1), params, controls)
    assert 0.99 < report.population_fidelity <= 1.0 + 1e-12


def test_swap_controls_validation():
    with pytest.raises(ValidationError):
        SwapControls(rate=0.0)
    with pytest.raises(ValidationError):
        SwapControls(control_m=9)


def test_convert_only_copies_fullerene_bit(outer, params):
    up = convert_only(outer, QuantumState.basis(1.5, -10), params, FAST)
    assert up.final_state.population(1.5, 10) == pytest.approx(1.0, abs=1e-9)
    down = convert_only(outer, QuantumState.basis(-1.5, -10), params, FAST)
    assert down.final_state.population(-1.5, -10) == pytest.approx(1.0)
    assert up.warnings == [] and down.warnings == []
    assert len(up.gates) == 1


def test_convert_only_warns_on_unprepared_fe8(outer, params):
    state = QuantumState.from_components([(0.6, (1.5, 10)), (0.8, (1.5, -10))])
    report = convert_only(outer, state, params, FAST)
    assert len(report.warnings) == 1
    assert "not prepared" in report.warnings[0]


def test_convert_only_rejects_leaked_input(outer, params):
    with pytest.raises(ProtocolError):
        convert_only(outer, QuantumState.basis(0.5, -10), params, FAST)


def test_ideal_references(outer):
    state = logical_state(outer, 0, 1)
    assert ideal_swap(state, outer).population(-1.5, 10) == 1.0
    assert ideal_convert(state, outer).population(1.5, 10) == 1.0
    assert ideal_convert(logical_state(outer, 1, 1), outer).population(-1.5, -10) == 1.0


@pytest.mark.parametrize("convention, expected", [("angular", 71.06e-9), ("strict_si", 11.31e-9)])
def test_timing_budget(convention, expected):
    budget = timing_budget(30.0, 22.4, 50e-9, convention)
    assert budget.t0_max == pytest.approx(expected, abs=0.1e-9)
    assert budget.feasible
    assert budget.ok is (convention == "angular")


def test_timing_budget_infeasible():
    budget = timing_budget(20.0, 22.4, 0.0)
    assert not budget.feasible
    assert not budget.ok
    with pytest.raises(ParameterError):
        timing_budget(30.0, 22.4, 0.0, convention="cgs")
    with pytest.raises(ParameterError):
        timing_budget(0.0, 22.4, 0.0)


def test_readout(inner):
    state = QuantumState.from_components([(1, (0.5, 10)), (1, (-0.5, -10)), (1, (1.5, 0))])
    plus, minus, zero = fe8_signs(state)
    assert (plus, minus, zero) == pytest.approx((1 / 3, 1 / 3, 1 / 3))
    result = readout_map(state, inner)
    assert result.unresolved == pytest.approx(1 / 3)
    assert result.fullerene == pytest.approx({0: 1 / 3, 1: 1 / 3})


def test_prepare_fe8(params):
    assert prepare_fe8(-10, None, params) == (0.0, 1.0)
    prep = prepare_fe8(10, 1e-6, params)
    assert prep.population == pytest.approx(1.0)
    assert prep.hold_time > 0
    late = prepare_fe8(10, 1e-6, params, timing_error=0.1)
    assert late.population == pytest.approx(math.sin(0.55 * math.pi) ** 2)
    with pytest.raises(ParameterError):
        prepare_fe8(0, 1e-6, params)
