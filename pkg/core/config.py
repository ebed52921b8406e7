# config.py
import json
import math
import os
from pathlib  import Path
from typing   import Any, Dict, Literal, Optional

from dotenv   import load_dotenv
from loguru   import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import ConfigError

# Load environment variables from .env file
load_dotenv()


class Config:
    """Configuration settings for the endospin simulation toolkit.

    Centralizes the environment-driven settings (parameter file, logging) and
    the numerical tolerances shared by every module. Physical model parameters
    do not live here; they are carried by :class:`SystemParams`.

    Attributes:
        PARAMS_PATH (str): JSON parameter file read when no ``--params`` flag is
            given. Taken from ``ENDOSPIN_PARAMS``; unset means built-in defaults.
        LOG_FILE (str): Rotating log file written by the CLI.
        LOG_LEVEL (str): Level of the stderr sink unless ``--debug`` is passed.
        HERMITIAN_TOL (float): Max-norm tolerance for ``M == M^dagger`` checks.
        UNITARY_TOL (float): Max-norm tolerance for ``U^dagger U == I`` checks.
        NORM_TOL (float): Allowed drift of a state norm after propagation.
        SWEEP_HALF_WINDOW (float): Half-width in tesla of a CNOT12 field sweep
            around its crossing ("0.019- T to 0.019+ T").
        PULSE_BZ (float): Field in tesla at which CNOT21 pulses are applied.
        GAP_GRID_POINTS (int): Grid size per refinement of the avoided-gap search.
        LZ_TRANSITION_WIDTHS (float): Half-window of the TDSE oracle, in units
            of the Landau-Zener transition width.
        WEAK_COUPLING_RATIO (float): Threshold on |J| / min(|omega|, D) above
            which pulses and sweeps are flagged as outside the weak-coupling regime.
        SIG_DIGITS (int): Significant digits of every float written to JSON/CSV.
    """

    PARAMS_PATH = os.getenv("ENDOSPIN_PARAMS")
    LOG_FILE    = os.getenv("ENDOSPIN_LOG_FILE", "logs/endospin.log")
    LOG_LEVEL   = os.getenv("ENDOSPIN_LOG_LEVEL", "INFO")

    SCHEMA_VERSION = "1.0"
    TOOL_VERSION   = "0.3.0"

    # Numerical tolerances
    HERMITIAN_TOL = 1e-12
    UNITARY_TOL   = 1e-10
    NORM_TOL      = 1e-9

    # Protocol defaults
    SWEEP_HALF_WINDOW = 0.002
    PULSE_BZ          = 0.05

    # Avoided-gap search: start window, grid size and stopping rule
    GAP_WINDOW      = 0.002
    GAP_GRID_POINTS = 41
    GAP_REL_TOL     = 1e-3
    GAP_ABS_TOL     = 1e-13
    GAP_MAX_ROUNDS  = 40

    # Weak coupling: largest |J| / min(|omega|, D) accepted by the diagonal model
    WEAK_COUPLING_RATIO = 0.5

    # Landau-Zener oracle
    LZ_TRANSITION_WIDTHS = 40.0
    LZ_TOL               = 1e-4
    LZ_MAX_REFINEMENTS   = 6

    # Output formatting
    SIG_DIGITS = 10


class SystemParams(BaseModel):
    """Physical constants and model parameters of the fullerene + Fe8 pair.

    Energies are in kelvin. Field names follow the code; the JSON parameter
    file uses the aliases (``d_kelvin``, ``j_eff_kelvin`` ...).
    """

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    g1:                float = Field(2.0, gt=0)
    g2:                float = Field(2.0, gt=0)
    d_axial:           float = Field(0.275, gt=0, alias="d_kelvin")
    j0:                Optional[float] = Field(None, alias="j0_kelvin")
    j_eff:             float = Field(0.0175, alias="j_eff_kelvin")
    theta:             float = Field(math.pi / 2, alias="theta_rad")
    phi:               float = Field(0.0, alias="phi_rad")
    e_transverse:      float = Field(0.046, ge=0, alias="e_transverse_kelvin")
    rabi:              float = Field(2 * math.pi * 30e6, gt=0, alias="rabi_rad_per_s")
    linewidth:         float = Field(22.4, gt=0, alias="linewidth_mhz")
    fe8_start_m:       Literal[-10, 10] = -10
    tunnel_gap:        float = Field(1e-6, gt=0, alias="tunnel_gap_kelvin")
    budget_convention: Literal["angular", "strict_si"] = "angular"

    @model_validator(mode="before")
    @classmethod
    def _derive_j_eff(cls, data: Any) -> Any:
        # j0 alone (with theta) determines J; j_eff only defaults when absent
        if not isinstance(data, dict):
            return data
        j0 = data.get("j0_kelvin", data.get("j0"))
        if j0 is None or "j_eff_kelvin" in data or "j_eff" in data:
            return data
        try:
            theta = float(data.get("theta_rad", data.get("theta", math.pi / 2)))
            data = dict(data)
            data["j_eff_kelvin"] = float(j0) * dipolar_factor(theta)
        except (TypeError, ValueError):
            pass
        return data

    @model_validator(mode="after")
    def _check_coupling(self) -> "SystemParams":
        factor = dipolar_factor(self.theta)
        if self.j0 is not None:
            expected = self.j0 * factor
            if abs(expected - self.j_eff) > 1e-12 * max(1.0, abs(self.j_eff)):
                raise ValueError(
                    f"j_eff={self.j_eff} inconsistent with j0*(1-3cos^2 theta)={expected}"
                )
        elif abs(factor) < 1e-15 and self.j_eff != 0.0:
            raise ValueError("j0 is undefined at the magic angle with non-zero j_eff")
        return self

    @property
    def j0_resolved(self) -> float:
        """Bare dipolar strength; derived from j_eff when not configured."""
        if self.j0 is not None:
            return self.j0
        factor = dipolar_factor(self.theta)
        return self.j_eff / factor if factor != 0.0 else 0.0

    @property
    def rabi_mhz(self) -> float:
        """Rabi frequency as an ordinary frequency, Omega / 2pi, in MHz."""
        return self.rabi / (2 * math.pi * 1e6)

    def snapshot(self) -> Dict[str, Any]:
        """Alias-keyed dump echoed into every CLI output record."""
        data = self.model_dump(by_alias=True)
        data["j0_kelvin"] = self.j0_resolved
        return data


def dipolar_factor(theta: float) -> float:
    """The angular factor 1 - 3cos^2(theta) of the Ising dipolar term."""
    return 1.0 - 3.0 * math.cos(theta) ** 2


def load_params(path: Optional[str] = None,
                overrides: Optional[Dict[str, Any]] = None) -> SystemParams:
    """Build SystemParams with precedence: overrides > parameter file > defaults.

    Args:
        path: JSON file path. Falls back to ``Config.PARAMS_PATH``.
        overrides: Alias-keyed values (typically CLI flags); ``None`` entries
            are ignored so unset flags never mask the file.

    Raises:
        ConfigError: unreadable file, malformed JSON, unknown keys or values
            outside their allowed range.
    """
    data: Dict[str, Any] = {}
    source = path or Config.PARAMS_PATH

    if source:
        file_path = Path(source)
        if not file_path.exists():
            raise ConfigError(f"Parameter file not found: {file_path}")
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON in {file_path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Parameter file {file_path} must hold a JSON object")
        logger.info(f"Loaded parameters from {file_path}")

    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    try:
        params = SystemParams.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid parameters: {e}") from e

    logger.debug(f"System parameters: {params.snapshot()}")
    return params
