# spinops.py
from dataclasses import dataclass
from fractions   import Fraction
from typing      import Iterable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from core.config import Config
from core.errors import NotHermitianError, ParameterError

# Product basis |n, m>: fullerene spin-3/2 first, Fe8 spin-10 second, both m-descending
N_VALUES: Tuple[float, ...] = (1.5, 0.5, -0.5, -1.5)
M_VALUES: Tuple[int, ...]   = tuple(range(10, -11, -1))
PRODUCT_LABELS = tuple((n, m) for n in N_VALUES for m in M_VALUES)

Label = Union[float, Tuple]


def format_label(label: Label) -> str:
    """Render a basis label in ket notation, e.g. (1.5, -10) -> '|3/2,-10>'."""
    parts = label if isinstance(label, tuple) else (label,)
    text = ",".join(str(Fraction(float(x)).limit_denominator(2)) for x in parts)
    return f"|{text}>"


def index_of(n: float, m: int) -> int:
    """Position of |n, m> in the 84-dimensional product basis."""
    if n not in N_VALUES:
        raise ParameterError(f"Fullerene projection n={n} not in {N_VALUES}")
    if m not in M_VALUES:
        raise ParameterError(f"Fe8 projection m={m} outside -10..10")
    return N_VALUES.index(n) * len(M_VALUES) + M_VALUES.index(m)


def low_lying_labels() -> Tuple[Tuple[float, int], ...]:
    """The 8 states n in {+-3/2, +-1/2} x m in {+-10} populated at low temperature."""
    return tuple((n, m) for n in N_VALUES for m in (10, -10))


@dataclass(frozen=True, eq=False)
class SpinMatrix:
    """Dense complex matrix tagged with the basis it acts on."""
    data:   np.ndarray
    labels: Tuple = ()

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ParameterError(f"SpinMatrix needs a square matrix, got shape {arr.shape}")
        if self.labels and len(self.labels) != arr.shape[0]:
            raise ParameterError(f"{len(self.labels)} labels for dimension {arr.shape[0]}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @classmethod
    def identity(cls, dim: int, labels: Sequence = ()) -> "SpinMatrix":
        return cls(np.eye(dim, dtype=complex), tuple(labels))

    def dag(self) -> "SpinMatrix":
        return SpinMatrix(self.data.conj().T, self.labels)

    def diagonal(self) -> np.ndarray:
        return np.diag(self.data).copy()

    def is_hermitian(self, tol: float = Config.HERMITIAN_TOL) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.data))) if self.dim else 1.0)
        return float(np.max(np.abs(self.data - self.data.conj().T), initial=0.0)) < tol * scale

    def is_unitary(self, tol: float = Config.UNITARY_TOL) -> bool:
        deviation = self.data.conj().T @ self.data - np.eye(self.dim)
        return float(np.max(np.abs(deviation), initial=0.0)) < tol

    def __matmul__(self, other):
        if isinstance(other, SpinMatrix):
            return SpinMatrix(self.data @ other.data, self.labels or other.labels)
        if isinstance(other, QuantumState):
            return QuantumState(self.data @ other.amplitudes, other.labels)
        return NotImplemented

    def __add__(self, other: "SpinMatrix") -> "SpinMatrix":
        return SpinMatrix(self.data + other.data, self.labels or other.labels)

    def __sub__(self, other: "SpinMatrix") -> "SpinMatrix":
        return SpinMatrix(self.data - other.data, self.labels or other.labels)

    def __mul__(self, scalar) -> "SpinMatrix":
        return SpinMatrix(self.data * scalar, self.labels)

    __rmul__ = __mul__

    def __neg__(self) -> "SpinMatrix":
        return SpinMatrix(-self.data, self.labels)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Complex amplitude vector over a labelled basis (84-dim product space by default)."""
    amplitudes: np.ndarray
    labels:     Tuple = PRODUCT_LABELS

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.labels and len(self.labels) != amps.size:
            raise ParameterError(f"{len(self.labels)} labels for {amps.size} amplitudes")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def basis(cls, n: float, m: int) -> "QuantumState":
        """Product basis state |n, m>."""
        amps = np.zeros(len(PRODUCT_LABELS), dtype=complex)
        amps[index_of(n, m)] = 1.0
        return cls(amps)

    @classmethod
    def from_amplitudes(cls, amplitudes: Iterable[complex],
                        labels: Optional[Sequence] = None) -> "QuantumState":
        """Normalized state from raw amplitudes; labels default to the product basis."""
        amps = np.asarray(list(amplitudes), dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ParameterError("Cannot normalize a zero amplitude vector")
        return cls(amps / norm, tuple(labels) if labels is not None else PRODUCT_LABELS)

    @classmethod
    def from_components(cls, components: Iterable[Tuple[complex, Tuple[float, int]]]) -> "QuantumState":
        """Normalized superposition sum_k c_k |n_k, m_k>."""
        amps = np.zeros(len(PRODUCT_LABELS), dtype=complex)
        for coefficient, (n, m) in components:
            amps[index_of(n, m)] += coefficient
        return cls.from_amplitudes(amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "QuantumState":
        return QuantumState.from_amplitudes(self.amplitudes, self.labels)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def population(self, n: float, m: int) -> float:
        return float(self.populations()[index_of(n, m)])

    def amplitude(self, n: float, m: int) -> complex:
        return complex(self.amplitudes[index_of(n, m)])

    def overlap(self, other: "QuantumState") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))


class SpinOperators(NamedTuple):
    sz: SpinMatrix
    sp: SpinMatrix
    sm: SpinMatrix
    sx: SpinMatrix
    sy: SpinMatrix


def spin_projections(s: float) -> np.ndarray:
    """Projections m = s, s-1, ..., -s of spin s."""
    two_s = 2 * float(s)
    if two_s < 0 or abs(two_s - round(two_s)) > 1e-9:
        raise ParameterError(f"Spin must be a non-negative half-integer, got {s}")
    return float(s) - np.arange(int(round(two_s)) + 1)


def spin_operators(s: float) -> SpinOperators:
    """Angular momentum matrices of spin s in the m-descending basis."""
    prjs = spin_projections(s)
    s = float(s)
    labels = tuple(float(m) for m in prjs)

    raising = np.diag(np.sqrt(s * (s + 1) - prjs[1:] * (prjs[1:] + 1)), k=1).astype(complex)
    lowering = raising.conj().T
    sx = 0.5 * (raising + lowering)
    sy = (raising - lowering) / 2j
    sz = np.diag(prjs).astype(complex)

    return SpinOperators(
        sz=SpinMatrix(sz, labels),
        sp=SpinMatrix(raising, labels),
        sm=SpinMatrix(lowering, labels),
        sx=SpinMatrix(sx, labels),
        sy=SpinMatrix(sy, labels),
    )


def _join(a: Label, b: Label) -> Tuple:
    left = a if isinstance(a, tuple) else (a,)
    right = b if isinstance(b, tuple) else (b,)
    return left + right


def tensor(a: SpinMatrix, b: SpinMatrix) -> SpinMatrix:
    """Kronecker product; labels ordered first by a's basis, then by b's."""
    labels = ()
    if a.labels and b.labels:
        labels = tuple(_join(la, lb) for la in a.labels for lb in b.labels)
    return SpinMatrix(np.kron(a.data, b.data), labels)


def expm_hermitian(h: SpinMatrix, t: float) -> SpinMatrix:
    """exp(-i h t) through the eigendecomposition h = V diag(lambda) V^dagger."""
    if not h.is_hermitian():
        raise NotHermitianError("expm_hermitian requires a Hermitian generator")
    if t == 0:
        return SpinMatrix.identity(h.dim, h.labels)
    herm = 0.5 * (h.data + h.data.conj().T)
    w, v = np.linalg.eigh(herm)
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    return SpinMatrix(u, h.labels)
