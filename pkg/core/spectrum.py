#!/usr/bin/env python3
"""
Energies, degenerate transition frequencies, and (avoided) level crossings.

Closed forms follow the diagonal weak-coupling model; ``avoided_gap`` and
``full_spectrum`` diagonalize the exact Hamiltonian.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses        import dataclass
from typing             import Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from loguru   import logger
from pydantic import BaseModel, ConfigDict

from core.config      import Config, SystemParams
from core.errors      import (AmbiguousBranchError, ConvergenceError,
                              NoCrossingError, ParameterError)
from core.hamiltonian import build_total, label_eigenvectors
from core.spinops     import (M_VALUES, N_VALUES, PRODUCT_LABELS, format_label,
                              index_of, low_lying_labels)
from core.units       import MUB_OVER_KB, field_to_zeeman, kelvin_to_mhz

State = Tuple[float, int]


@dataclass(frozen=True)
class EnergyLevel:
    state:  State
    energy: float
    bz:     float

    @property
    def label(self) -> str:
        return format_label(self.state)


class CrossingPoint(BaseModel):
    """Two diabatic states degenerate at bz_star; gap is 0 in the diagonal model."""

    model_config = ConfigDict(frozen=True)

    state_a:        State
    state_b:        State
    bz_star:        float
    omega_star:     float
    gap:            float = 0.0
    order:          Literal["first_order", "higher_order"]
    negative_field: bool = False

    def record(self) -> dict:
        data = self.model_dump()
        data["label_a"] = format_label(self.state_a)
        data["label_b"] = format_label(self.state_b)
        return data


def _check_state(n: float, m: int) -> None:
    if n not in N_VALUES:
        raise ParameterError(f"n={n} is not a spin-3/2 projection")
    if m not in M_VALUES:
        raise ParameterError(f"m={m} is outside -10..10")


def energy_diag(n: float, m: int, omega: float, d: float, j: float) -> float:
    """Diagonal-model energy -omega(n + m) - D m^2 + J n m."""
    _check_state(n, m)
    return -omega * (n + m) - d * m * m + j * n * m


def transition_freq(m: int, omega: float, j: float) -> float:
    """Degenerate transition frequency E(n, m) - E(n-1, m) = -omega + m J."""
    if m not in M_VALUES:
        raise ParameterError(f"m={m} is outside -10..10")
    return -omega + m * j


def transition_table(p: SystemParams, bz: float) -> List[Tuple[int, float, float]]:
    """Degenerate transition frequencies at field bz: (m, frequency in K, frequency in MHz) for m = 10..-10."""
    omega = field_to_zeeman(bz, p.g1)
    rows = []
    for m in M_VALUES:
        freq = transition_freq(m, omega, p.j_eff)
        rows.append((m, freq, kelvin_to_mhz(freq)))
    return rows


def _diag_energy_at(p: SystemParams, state: State, bz) -> np.ndarray:
    n, m = state
    return (-field_to_zeeman(bz, p.g1) * n - field_to_zeeman(bz, p.g2) * m
            - p.d_axial * m * m + p.j_eff * n * m)


def find_crossing(a: State, b: State, p: SystemParams) -> CrossingPoint:
    """Solve E(a) = E(b) of the diagonal model for the field, analytically."""
    _check_state(*a)
    _check_state(*b)
    if tuple(a) == tuple(b):
        raise NoCrossingError(f"no crossing: {format_label(a)} paired with itself")

    (n_a, m_a), (n_b, m_b) = a, b
    slope = MUB_OVER_KB * (p.g1 * (n_a - n_b) + p.g2 * (m_a - m_b))
    if slope == 0:
        raise NoCrossingError(f"no crossing: {format_label(a)} and {format_label(b)} are parallel")

    numerator = p.j_eff * (n_a * m_a - n_b * m_b) - p.d_axial * (m_a ** 2 - m_b ** 2)
    bz_star = numerator / slope + 0.0
    crossing = CrossingPoint(
        state_a        = (float(n_a), int(m_a)),
        state_b        = (float(n_b), int(m_b)),
        bz_star        = bz_star,
        omega_star     = field_to_zeeman(bz_star, p.g1),
        order          = "first_order" if n_a == n_b else "higher_order",
        negative_field = bz_star < 0,
    )
    if crossing.negative_field:
        logger.debug(f"Crossing {format_label(a)}/{format_label(b)} lies at negative field {bz_star:.6g} T")
    return crossing


def _check_range(bz_range: Sequence[float]) -> Tuple[float, float]:
    lo, hi = float(bz_range[0]), float(bz_range[1])
    if lo > hi:
        raise ParameterError(f"Field range must be ordered, got [{lo}, {hi}]")
    return lo, hi


def enumerate_crossings(p: SystemParams,
                        bz_range: Sequence[float] = (0.0, 0.05),
                        states: Optional[Iterable[State]] = None) -> List[CrossingPoint]:
    """All pairwise crossings among ``states`` with bz_star inside the range, sorted by field."""
    lo, hi = _check_range(bz_range)
    states = list(states) if states is not None else list(low_lying_labels())

    found = []
    for a, b in itertools.combinations(states, 2):
        try:
            crossing = find_crossing(a, b, p)
        except NoCrossingError:
            continue
        if lo <= crossing.bz_star <= hi:
            found.append(crossing)

    found.sort(key=lambda c: (c.bz_star, c.state_a, c.state_b))
    logger.debug(f"{len(found)} crossings in [{lo}, {hi}] T among {len(states)} states")
    return found


def scan_crossings(p: SystemParams,
                   bz_range: Sequence[float] = (0.0, 0.05),
                   states: Optional[Iterable[State]] = None,
                   points: int = 100_000) -> List[Tuple[State, State, float]]:
    """Brute-force sign-change scan of pairwise energy differences on a field grid."""
    lo, hi = _check_range(bz_range)
    states = list(states) if states is not None else list(low_lying_labels())
    grid = np.linspace(lo, hi, points)
    curves = {s: _diag_energy_at(p, s, grid) for s in states}

    found = []
    for a, b in itertools.combinations(states, 2):
        diff = curves[a] - curves[b]
        for i in np.flatnonzero(diff == 0):
            found.append((a, b, float(grid[i])))
        for i in np.flatnonzero(diff[:-1] * diff[1:] < 0):
            x0, x1, d0, d1 = grid[i], grid[i + 1], diff[i], diff[i + 1]
            found.append((a, b, float(x0 - d0 * (x1 - x0) / (d1 - d0))))

    found.sort(key=lambda item: (item[2], item[0], item[1]))
    return found


def _branch_separation(p: SystemParams, bz: float, idx_a: int, idx_b: int) -> float:
    energies, vectors = np.linalg.eigh(build_total(p, bz, include_transverse=True).data)
    weight = np.abs(vectors[idx_a]) ** 2 + np.abs(vectors[idx_b]) ** 2
    top = np.argsort(weight)[-2:]
    if weight[top].min() < 0.5:
        raise AmbiguousBranchError(
            f"ambiguous branches at B_z={bz:.9g} T: pair weight {weight[top].min():.3f} < 0.5"
        )
    return float(abs(energies[top[1]] - energies[top[0]]))


def avoided_gap(a: State, b: State, p: SystemParams,
                window: float = Config.GAP_WINDOW) -> float:
    """Minimum separation of the two adiabatic branches of an (avoided) crossing, in K.

    Grid search around bz_star with the window shrunk around the running minimum
    until the gap changes less than GAP_REL_TOL and the grid resolves the minimum.
    """
    crossing = find_crossing(a, b, p)
    idx_a, idx_b = index_of(*crossing.state_a), index_of(*crossing.state_b)
    center, half = crossing.bz_star, window
    points = Config.GAP_GRID_POINTS
    previous = None

    for round_idx in range(Config.GAP_MAX_ROUNDS):
        grid = np.linspace(center - half, center + half, points)
        seps = np.array([_branch_separation(p, bz, idx_a, idx_b) for bz in grid])
        k = int(np.argmin(seps))
        gap, center = float(seps[k]), float(grid[k])
        logger.debug(f"gap round {round_idx}: {gap:.6e} K at {center:.12g} T (half-window {half:.3e})")

        neighbours = seps[max(k - 1, 0):k + 2]
        resolved = float(neighbours.max()) <= 1.1 * gap
        if gap <= Config.GAP_ABS_TOL and previous is not None and previous <= Config.GAP_ABS_TOL:
            return gap
        if previous is not None and resolved and abs(gap - previous) <= Config.GAP_REL_TOL * gap:
            logger.info(f"Avoided gap {format_label(a)}/{format_label(b)}: {gap:.6e} K at {center:.9g} T")
            return gap
        previous = gap
        half = 4 * half / (points - 1)

    raise ConvergenceError("avoided gap search did not converge",
                           {"gap": previous, "bz": center, "half_window": half})


def full_spectrum(p: SystemParams, bz: float, include_transverse: bool = False) -> List[EnergyLevel]:
    """Sorted eigenvalues of the exact Hamiltonian, labelled by dominant basis state."""
    energies, vectors = np.linalg.eigh(build_total(p, bz, include_transverse).data)
    labels = label_eigenvectors(vectors)
    return [EnergyLevel(PRODUCT_LABELS[idx], float(e), bz) for e, idx in zip(energies, labels)]


def spectrum_curves(p: SystemParams, bz_values: Sequence[float],
                    states: Optional[Iterable[State]] = None,
                    model: Literal["diagonal", "full"] = "diagonal",
                    workers: Optional[int] = None) -> List[EnergyLevel]:
    """Energies of ``states`` along a field grid, ordered by field then state."""
    states = list(states) if states is not None else list(low_lying_labels())

    if model == "diagonal":
        rows = []
        for bz in bz_values:
            rows.extend(EnergyLevel(s, float(_diag_energy_at(p, s, bz)), float(bz)) for s in states)
        return rows

    def _levels_at(bz: float) -> List[EnergyLevel]:
        by_state = {lvl.state: lvl for lvl in full_spectrum(p, float(bz), include_transverse=True)}
        return [by_state[s] for s in states]

    # executor.map keeps input order regardless of completion order
    with ThreadPoolExecutor(max_workers=workers) as executor:
        per_field = list(executor.map(_levels_at, bz_values))
    return [lvl for levels in per_field for lvl in levels]
