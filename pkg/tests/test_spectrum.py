import numpy as np
import pytest

from core.config   import SystemParams
from core.errors   import NoCrossingError, ParameterError
from core.spectrum import (avoided_gap, energy_diag, enumerate_crossings, find_crossing,
                           full_spectrum, scan_crossings, spectrum_curves,
                           transition_freq, transition_table)
from core.spinops  import N_VALUES, low_lying_labels
from core.units    import field_to_zeeman


def test_energy_matches_closed_form():
    assert energy_diag(1.5, 10, 1.0, 0.275, 0.0175) == pytest.approx(-11.5 - 27.5 + 0.2625)
    with pytest.raises(ParameterError):
        energy_diag(2.0, 0, 1.0, 0.275, 0.0175)
    with pytest.raises(ParameterError):
        energy_diag(1.5, 11, 1.0, 0.275, 0.0175)


def test_transitions_are_degenerate_in_n():
    omega, d, j = 0.0672, 0.275, 0.0175
    for m in range(-10, 11):
        freq = transition_freq(m, omega, j)
        for n_hi, n_lo in zip(N_VALUES, N_VALUES[1:]):
            gap = energy_diag(n_hi, m, omega, d, j) - energy_diag(n_lo, m, omega, d, j)
            assert gap == pytest.approx(freq, abs=1e-14)


def test_transition_table_at_pulse_field(params):
    rows = transition_table(params, 0.05)
    assert len(rows) == 21
    assert [m for m, _, _ in rows] == list(range(10, -11, -1))
    m, _, mhz = rows[0]
    assert m == 10
    assert mhz == pytest.approx(2246.78, abs=0.05)
    spacing = rows[0][2] - rows[1][2]
    assert spacing == pytest.approx(364.64, abs=0.05)


@pytest.mark.parametrize("n, expected", [(1.5, 0.019540), (0.5, 0.006513)])
def test_first_order_crossing_fields(params, n, expected):
    crossing = find_crossing((n, -10), (n, 10), params)
    assert crossing.bz_star == pytest.approx(expected, abs=5e-7)
    assert crossing.order == "first_order"
    assert not crossing.negative_field
    assert crossing.gap == 0.0
    assert crossing.omega_star == pytest.approx(field_to_zeeman(crossing.bz_star, 2.0))


def test_negative_field_crossing_is_flagged(params):
    crossing = find_crossing((-1.5, -10), (-1.5, 10), params)
    assert crossing.negative_field
    assert crossing.bz_star == pytest.approx(-0.019540, abs=5e-7)


def test_higher_order_crossing_is_labelled(params):
    crossing = find_crossing((1.5, 10), (0.5, -10), params)
    assert crossing.order == "higher_order"
    assert crossing.record()["label_a"] == "|3/2,10>"


def test_crossing_errors(params):
    with pytest.raises(NoCrossingError):
        find_crossing((1.5, 10), (1.5, 10), params)
    with pytest.raises(NoCrossingError):
        find_crossing((1.5, 9), (0.5, 10), params)


def test_enumeration_agrees_with_brute_force_scan(params):
    analytic = enumerate_crossings(params, (0.0, 0.05))
    scanned = scan_crossings(params, (0.0, 0.05), points=20_001)
    assert len(analytic) == len(scanned)
    for crossing, (a, b, bz) in zip(analytic, scanned):
        assert (crossing.state_a, crossing.state_b) == (a, b)
        assert crossing.bz_star == pytest.approx(bz, abs=1e-9)


def test_enumeration_is_sorted_and_in_range(params):
    crossings = enumerate_crossings(params, (0.0, 0.05))
    fields = [c.bz_star for c in crossings]
    assert fields == sorted(fields)
    assert all(0.0 <= bz <= 0.05 for bz in fields)
    first_order = [c for c in crossings if c.order == "first_order"]
    assert [round(c.bz_star, 6) for c in first_order] == [0.006513, 0.01954]
    with pytest.raises(ParameterError):
        enumerate_crossings(params, (0.05, 0.0))


def test_avoided_gap_from_transverse_anisotropy():
    # m = 0 and m = -2 are joined directly by E (S+^2 + S-^2)/2, so the gap is first order in E
    p = SystemParams(j_eff_kelvin=0.0, e_transverse_kelvin=0.001)
    crossing = find_crossing((1.5, -2), (1.5, 0), p)
    assert crossing.bz_star == pytest.approx(0.4094, abs=1e-3)
    gap = avoided_gap((1.5, -2), (1.5, 0), p)
    assert gap == pytest.approx(0.109, rel=0.03)


def test_avoided_gap_of_the_swap_crossing(params):
    pair = ((1.5, -10), (1.5, 10))
    closed = avoided_gap(*pair, SystemParams(e_transverse_kelvin=0.0))
    assert closed < 1e-12
    gap = avoided_gap(*pair, params)
    assert 1e-11 < gap < 1e-8
    assert avoided_gap(pair[1], pair[0], params) == pytest.approx(gap, rel=2e-3)


def test_full_spectrum_labels(params):
    levels = full_spectrum(params, 0.05)
    assert len(levels) == 84
    energies = [lvl.energy for lvl in levels]
    assert energies == sorted(energies)
    assert len({lvl.state for lvl in levels}) == 84
    assert levels[0].label == "|-3/2,10>"


def test_spectrum_curves(params):
    grid = np.linspace(0.0, 0.05, 6)
    diag = spectrum_curves(params, grid)
    assert len(diag) == 6 * len(low_lying_labels())
    assert [lvl.bz for lvl in diag[:8]] == [0.0] * 8

    serial = spectrum_curves(params, grid, model="full", workers=1)
    threaded = spectrum_curves(params, grid, model="full", workers=3)
    assert [(lvl.state, lvl.bz, lvl.energy) for lvl in serial] == \
           [(lvl.state, lvl.bz, lvl.energy) for lvl in threaded]
    for d_lvl, f_lvl in zip(diag, serial):
        assert d_lvl.state == f_lvl.state
        assert d_lvl.energy == pytest.approx(f_lvl.energy, abs=0.1)
