# errors.py
from dataclasses import dataclass
from typing      import Any, Dict, List, Optional


class EndospinError(Exception):
    """Base class for every physics, validation and configuration failure."""


class ConfigError(EndospinError):
    """Parameter file or environment could not be turned into SystemParams."""


class ParameterError(EndospinError):
    """An operation precondition on its numeric arguments was violated."""


class NotHermitianError(ParameterError):
    """A generator passed to the exponential was not Hermitian."""


class NoCrossingError(EndospinError):
    """Two diagonal levels never become degenerate (parallel or identical)."""


class AmbiguousBranchError(EndospinError):
    """Adiabatic branches could not be matched to the requested pair."""


class NoResonanceError(EndospinError):
    """An ESR carrier does not address any Fe8 column."""


class NonSelectiveSweepError(EndospinError):
    """A sweep window covers more than one first-order crossing."""


class ProtocolError(EndospinError):
    """Gate composition received a state or setting it cannot handle."""


class ConvergenceError(EndospinError):
    """Iterative refinement hit its cap without meeting tolerance."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self):
        if not self.diagnostics:
            return super().__str__()
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{super().__str__()} ({details})"


@dataclass(frozen=True)
class Diagnostic:
    """One parser or validator finding, positioned in the source text."""
    code:     str
    message:  str
    line:     int
    column:   int
    severity: str = "error"

    def __str__(self):
        return f"{self.line}:{self.column}: {self.severity} {self.code}: {self.message}"


class PulseSyntaxError(EndospinError):
    """Source text failed to parse; carries every diagnostic found."""

    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))
