"""
Physical-constant conversions between kelvin, MHz, tesla and seconds.

Kelvin is the canonical energy unit of the package (the anisotropy D and the
coupling J are quoted in K); conversions happen only at I/O boundaries.

Notes
-----
- k_B, h and hbar are exact SI constants taken from :mod:`scipy.constants`.
- The Bohr magneton is pinned to CODATA-2018 so downstream numbers do not
  move with the scipy release.
"""

from dataclasses import dataclass
from enum        import Enum

import scipy.constants as constants

from core.errors import ParameterError

K_B   = constants.k
H     = constants.h
HBAR  = constants.hbar
MU_B  = 9.2740100783e-24  # J/T, CODATA-2018

KB_OVER_H_MHZ = K_B / H / 1e6   # 20836.619... MHz/K
MUB_OVER_KB   = MU_B / K_B      # 0.6717138... K/T
KB_OVER_HBAR  = K_B / HBAR      # 1.30920e11 rad/s/K

# The coupling quoted as "0.0175 K corresponding to 350 MHz"; the exact map gives 364.6 MHz
QUOTED_J_KELVIN = 0.0175
QUOTED_J_MHZ    = 350.0


class Unit(str, Enum):
    KELVIN        = "K"
    MEGAHERTZ     = "MHz"
    TESLA         = "T"
    MILLITESLA    = "mT"
    SECOND        = "s"
    NANOSECOND    = "ns"
    DIMENSIONLESS = "1"


# unit -> (dimension, factor to the canonical unit of that dimension)
_SCALE = {
    Unit.KELVIN:        ("energy", 1.0),
    Unit.MEGAHERTZ:     ("energy", 1.0 / KB_OVER_H_MHZ),
    Unit.TESLA:         ("field", 1.0),
    Unit.MILLITESLA:    ("field", 1e-3),
    Unit.SECOND:        ("time", 1.0),
    Unit.NANOSECOND:    ("time", 1e-9),
    Unit.DIMENSIONLESS: ("dimensionless", 1.0),
}


def parse_unit(name: str) -> Unit:
    """Resolve a unit symbol or enum name ("MHz", "megahertz", "mT" ...)."""
    for unit in Unit:
        if name == unit.value or name.lower() == unit.name.lower():
            return unit
    raise ParameterError(f"Unknown unit '{name}'. Expected one of {[u.value for u in Unit]}")


@dataclass(frozen=True)
class PhysQuantity:
    value: float
    unit:  Unit

    def to(self, unit: Unit, g: float = 2.0) -> "PhysQuantity":
        """Convert within a dimension, or across the Zeeman bridge field <-> energy."""
        src_dim, src_scale = _SCALE[self.unit]
        dst_dim, dst_scale = _SCALE[unit]
        canonical = self.value * src_scale

        if src_dim == dst_dim:
            return PhysQuantity(canonical / dst_scale, unit)
        if src_dim == "field" and dst_dim == "energy":
            return PhysQuantity(field_to_zeeman(canonical, g) / dst_scale, unit)
        if src_dim == "energy" and dst_dim == "field":
            return PhysQuantity(zeeman_to_field(canonical, g) / dst_scale, unit)
        raise ParameterError(f"Cannot convert {self.unit.value} to {unit.value}")

    def __str__(self):
        return f"{self.value:.6g} {self.unit.value}"


def kelvin_to_mhz(x: float) -> float:
    """Energy in K to frequency in MHz, x * k_B/h."""
    return x * KB_OVER_H_MHZ


def mhz_to_kelvin(f: float) -> float:
    return f / KB_OVER_H_MHZ


def kelvin_to_angular(x: float) -> float:
    """Energy in K to angular frequency in rad/s, x * k_B/hbar."""
    return x * KB_OVER_HBAR


def field_to_zeeman(b: float, g: float) -> float:
    """Zeeman energy omega = g mu_B B_z in kelvin."""
    if g <= 0:
        raise ParameterError(f"g-factor must be positive, got {g}")
    return g * MUB_OVER_KB * b


def zeeman_to_field(omega: float, g: float) -> float:
    """Inverse of :func:`field_to_zeeman`: the field in tesla giving energy omega."""
    if g <= 0:
        raise ParameterError(f"g-factor must be positive, got {g}")
    return omega / (g * MUB_OVER_KB)


def require_positive(name: str, value: float, strict: bool = True) -> None:
    """Reject negative (or zero when strict) magnitudes such as fields and durations."""
    if value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ParameterError(f"{name} must be {bound}, got {value}")


def convert(value: float, from_unit: str, to_unit: str, g: float = 2.0) -> float:
    """CLI entry: convert a bare number between unit symbols."""
    return PhysQuantity(value, parse_unit(from_unit)).to(parse_unit(to_unit), g=g).value
