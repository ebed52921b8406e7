#!/usr/bin/env python3
"""
Hamiltonians of an endohedral spin-3/2 coupled to the spin-10 Fe8 nanomagnet.

All matrices are in kelvin and act on the product basis |n, m> (n-major,
both projections descending). ``build_total`` is the exact model; ``build_hc``
is the diagonal weak-coupling model that keeps only the Ising dipolar term.
"""

import cmath
import math
from dataclasses import dataclass
from typing      import List, Optional, Tuple

import numpy as np
from loguru         import logger
from scipy.optimize import linear_sum_assignment

from core.config  import Config, SystemParams, dipolar_factor
from core.spinops import (M_VALUES, N_VALUES, PRODUCT_LABELS, SpinMatrix,
                          spin_operators, tensor)
from core.units   import field_to_zeeman

FULLERENE_SPIN = 1.5
FE8_SPIN       = 10

S1 = spin_operators(FULLERENE_SPIN)
S2 = spin_operators(FE8_SPIN)
I1 = SpinMatrix.identity(S1.sz.dim, S1.sz.labels)
I2 = SpinMatrix.identity(S2.sz.dim, S2.sz.labels)


def build_h1(p: SystemParams, bz: float) -> SpinMatrix:
    """Fullerene Zeeman term -g1 mu_B B_z S1z (diagonal, 4x4)."""
    omega = field_to_zeeman(bz, p.g1)
    return -omega * S1.sz


def build_h2(p: SystemParams, bz: float, include_transverse: bool = False) -> SpinMatrix:
    """Fe8 spin-10 term -D S2z^2 - g2 mu_B B_z S2z [+ E (S2x^2 - S2y^2)]."""
    omega = field_to_zeeman(bz, p.g2)
    sz2 = S2.sz @ S2.sz
    h2 = -p.d_axial * sz2 - omega * S2.sz
    if include_transverse and p.e_transverse > 0:
        h2 = h2 + p.e_transverse * (S2.sx @ S2.sx - S2.sy @ S2.sy)
    return h2


def dipolar_terms(p: SystemParams) -> dict:
    """The six dipolar pieces A, B, C, E, F, G without the J0 prefactor."""
    theta, phi = p.theta, p.phi
    axial = dipolar_factor(theta)
    sc = math.sin(theta) * math.cos(theta)
    s2 = math.sin(theta) ** 2

    a = axial * tensor(S1.sz, S2.sz)
    b = -0.25 * axial * (tensor(S1.sp, S2.sm) + tensor(S1.sm, S2.sp))
    c = (-1.5 * sc * cmath.exp(-1j * phi)) * (tensor(S1.sz, S2.sp) + tensor(S1.sp, S2.sz))
    f = (-0.75 * s2 * cmath.exp(-2j * phi)) * tensor(S1.sp, S2.sp)
    # E = C^dagger and G = F^dagger keep the sum exactly Hermitian
    return {"A": a, "B": b, "C": c, "E": c.dag(), "F": f, "G": f.dag()}


def build_hi_full(p: SystemParams) -> SpinMatrix:
    """Full magnetic dipolar coupling J0 (A + B + C + E + F + G), 84x84."""
    terms = dipolar_terms(p)
    total = SpinMatrix(np.zeros((84, 84), dtype=complex), PRODUCT_LABELS)
    for term in terms.values():
        total = total + term
    return p.j0_resolved * total


def build_hc(p: SystemParams, bz: float) -> SpinMatrix:
    """Diagonal weak-coupling model -omega(S1z + S2z) - D S2z^2 + J S1z S2z."""
    omega1 = field_to_zeeman(bz, p.g1)
    omega2 = field_to_zeeman(bz, p.g2)
    diag = np.array([
        -omega1 * n - omega2 * m - p.d_axial * m * m + p.j_eff * n * m
        for n, m in PRODUCT_LABELS
    ])
    return SpinMatrix(np.diag(diag).astype(complex), PRODUCT_LABELS)


def build_total(p: SystemParams, bz: float, include_transverse: bool = False) -> SpinMatrix:
    """H = H1 x I + I x H2 + H_I with the full dipolar coupling."""
    h = tensor(build_h1(p, bz), I2) + tensor(I1, build_h2(p, bz, include_transverse))
    return h + build_hi_full(p)


def label_eigenvectors(vectors: np.ndarray) -> List[int]:
    """One-to-one assignment of eigenvector columns to basis indices by overlap.

    Returns ``labels`` with ``labels[k]`` the basis index assigned to column k.
    Maximizes the summed |overlap|^2 so near-degenerate mixtures never share a label.
    """
    weights = np.abs(vectors) ** 2
    rows, cols = linear_sum_assignment(weights.T, maximize=True)
    labels = [0] * vectors.shape[1]
    for col_idx, basis_idx in zip(rows, cols):
        labels[col_idx] = int(basis_idx)
    return labels


@dataclass(frozen=True)
class LevelComparison:
    label:          Tuple[float, int]
    full_energy:    float
    diag_energy:    float
    deviation:      float
    level_bound:    float
    within_bound:   bool


@dataclass(frozen=True)
class WeakCouplingReport:
    bz:            float
    levels:        Tuple[LevelComparison, ...]
    global_bound:  float
    delta_min:     float

    @property
    def max_deviation(self) -> float:
        return max(level.deviation for level in self.levels)

    @property
    def all_within(self) -> bool:
        return all(level.within_bound for level in self.levels)

    @property
    def tightness(self) -> float:
        """Largest deviation / level_bound; 1 means some level sits on its bound."""
        return max((level.deviation / level.level_bound if level.level_bound > 0 else 0.0)
                   for level in self.levels)


def weak_coupling_report(p: SystemParams, bz: float, factor: float = 10.0) -> WeakCouplingReport:
    """Compare the exact spectrum (transverse off) with the diagonal model level by level.

    ``global_bound`` is factor*J^2/Delta_min with Delta_min the smallest unperturbed
    spacing between states joined by an off-diagonal dipolar element. The per-level
    bound weighs each such element by its actual size,
    factor * sum_l |V_kl|^2 / max(|E_k - E_l|, |V_kl|),
    which stays finite at exact degeneracies.

    The literal global form does not hold for every level: the off-diagonal
    elements carry spin factors up to ~sqrt(110) J, and at 0.05 T some levels
    move by ~0.36 K against a global bound of ~0.027 K. The per-level form keeps
    the factor 10, so a level whose shift is purely second order (no diagonal
    dipolar part, as at theta = pi/2) uses at most about a tenth of its bound;
    ``WeakCouplingReport.tightness`` reports the actual worst ratio.
    """
    hc = build_hc(p, bz)
    e0 = hc.diagonal().real
    full = build_total(p, bz, include_transverse=False)
    coupling = full.data - np.diag(np.diag(full.data))

    spacing = np.abs(e0[:, None] - e0[None, :])
    magnitude = np.abs(coupling)
    connected = magnitude > 1e-15
    delta_min = float(spacing[connected].min()) if connected.any() else math.inf
    global_bound = factor * p.j_eff ** 2 / delta_min if delta_min > 0 else math.inf

    denom = np.maximum(spacing, magnitude)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(connected, magnitude ** 2 / denom, 0.0)
    level_bounds = factor * ratio.sum(axis=1)

    energies, vectors = np.linalg.eigh(full.data)
    labels = label_eigenvectors(vectors)

    levels = []
    for energy, basis_idx in zip(energies, labels):
        diag_energy = float(e0[basis_idx])
        deviation = abs(float(energy) - diag_energy)
        bound = float(level_bounds[basis_idx])
        levels.append(LevelComparison(
            label        = PRODUCT_LABELS[basis_idx],
            full_energy  = float(energy),
            diag_energy  = diag_energy,
            deviation    = deviation,
            level_bound  = bound,
            within_bound = deviation <= bound,
        ))

    report = WeakCouplingReport(bz=bz, levels=tuple(levels),
                                global_bound=global_bound, delta_min=delta_min)
    logger.info(f"Weak-coupling check at B_z={bz} T: max deviation "
                f"{report.max_deviation:.3e} K, Delta_min={delta_min:.4f} K")
    return report


def weak_coupling_ratio(p: SystemParams, bz_from: float, bz_to: Optional[float] = None) -> float:
    """|J| / min(|omega|, D) at bz_from, or its largest value over a sweep to bz_to.

    The diagonal model assumes |J| << min(|omega|, D); over a sweep the worst
    point is the field closest to zero.
    """
    lo, hi = sorted((bz_from, bz_from if bz_to is None else bz_to))
    weakest = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
    if p.j_eff == 0.0:
        return 0.0
    floor = min(abs(field_to_zeeman(weakest, p.g1)), p.d_axial)
    return abs(p.j_eff) / floor if floor > 0 else math.inf


def weak_coupling_ok(p: SystemParams, bz_from: float, bz_to: Optional[float] = None) -> bool:
    return weak_coupling_ratio(p, bz_from, bz_to) <= Config.WEAK_COUPLING_RATIO


def fe8_tunnel_splitting(p: SystemParams) -> float:
    """Zero-field splitting of the two lowest Fe8 levels with the transverse term on."""
    energies = np.linalg.eigvalsh(build_h2(p, 0.0, include_transverse=True).data)
    return float(energies[1] - energies[0])


__all__ = [
    "build_h1", "build_h2", "build_hi_full", "build_hc", "build_total",
    "dipolar_terms", "label_eigenvectors", "weak_coupling_report",
    "weak_coupling_ratio", "weak_coupling_ok",
    "fe8_tunnel_splitting", "SystemParams", "N_VALUES", "M_VALUES",
]
