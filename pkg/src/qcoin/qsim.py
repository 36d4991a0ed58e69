"""Dense statevector engine for one- and two-qubit systems.

Qubit ordering is big-endian: the first tensor factor is the most significant
bit of the basis index, so |10> has index 2.  States and gates are immutable;
measurement draws from an explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from math import sqrt

import numpy as np

ALGEBRA_TOL = 1e-12
NORM_TOL = 1e-9
ZERO_AMPLITUDE = 1e-9

_SQRT1_2 = 1 / sqrt(2)


class NotUnitaryError(ValueError):
    pass


class DimensionError(ValueError):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class StateVector:
    """Normalized amplitude vector over the computational basis (length 2 or 4)."""

    __slots__ = ("_amps",)

    def __init__(self, amplitudes: Iterable[complex]):
        amps = np.array(list(amplitudes) if not isinstance(amplitudes, np.ndarray) else amplitudes,
                        dtype=complex)
        if amps.shape not in ((2,), (4,)):
            raise DimensionError(f"expected 2 or 4 amplitudes, got shape {amps.shape}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (|psi|^2 = {norm!r})")
        self._amps = _frozen(amps)

    @classmethod
    def basis_state(cls, bits: str) -> StateVector:
        """Computational basis state, e.g. ``basis_state("01")``."""
        if not bits or set(bits) - {"0", "1"} or len(bits) > 2:
            raise ValueError(f"bad basis label {bits!r}")
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(amps)

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    @property
    def dimension(self) -> int:
        return self._amps.shape[0]

    @property
    def num_qubits(self) -> int:
        return 1 if self.dimension == 2 else 2

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self._amps, self._amps).real))

    def probabilities(self) -> np.ndarray:
        return np.abs(self._amps) ** 2

    def allclose(self, other: StateVector | Sequence[complex], atol: float = ALGEBRA_TOL) -> bool:
        """Exact comparison (global phase included) up to ``atol`` per component."""
        theirs = other.amplitudes if isinstance(other, StateVector) else np.asarray(other, dtype=complex)
        if theirs.shape != self._amps.shape:
            return False
        return float(np.max(np.abs(self._amps - theirs))) < atol

    def max_error(self, other: StateVector | Sequence[complex]) -> float:
        theirs = other.amplitudes if isinstance(other, StateVector) else np.asarray(other, dtype=complex)
        return float(np.max(np.abs(self._amps - theirs)))

    def __len__(self) -> int:
        return self.dimension

    def __iter__(self):
        return iter(self._amps)

    def __neg__(self) -> StateVector:
        return StateVector(-self._amps)

    def __repr__(self) -> str:
        return f"StateVector({np.array2string(self._amps, precision=6)})"


def equal_up_to_phase(a: StateVector, b: StateVector, atol: float = ALGEBRA_TOL) -> bool:
    """Physical equivalence: ``a == e^{i phi} b`` for some global phase."""
    if a.dimension != b.dimension:
        return False
    overlap = np.vdot(b.amplitudes, a.amplitudes)
    if abs(overlap) < ZERO_AMPLITUDE:
        return False
    phase = overlap / abs(overlap)
    return bool(np.max(np.abs(a.amplitudes - phase * b.amplitudes)) < atol)


def product_state(q1: StateVector, q2: StateVector) -> StateVector:
    """Two separate qubits as one register; ``q1`` is the most significant qubit."""
    if q1.dimension != 2 or q2.dimension != 2:
        raise DimensionError("product_state takes two single-qubit states")
    return StateVector(np.kron(q1.amplitudes, q2.amplitudes))


class Gate:
    """Unitary matrix of dimension 2 or 4.  Unitarity is checked on construction."""

    __slots__ = ("_matrix", "name")

    def __init__(self, matrix, name: str | None = None):
        mat = np.array(matrix, dtype=complex)
        if mat.shape not in ((2, 2), (4, 4)):
            raise DimensionError(f"gate must be 2x2 or 4x4, got {mat.shape}")
        err = np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0])))
        if err > ALGEBRA_TOL:
            raise NotUnitaryError(f"matrix is not unitary (max |U^dag U - I| = {err:.3g})")
        self._matrix = _frozen(mat)
        self.name = name

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dimension(self) -> int:
        return self._matrix.shape[0]

    def allclose(self, other, atol: float = ALGEBRA_TOL) -> bool:
        theirs = other.matrix if isinstance(other, Gate) else np.asarray(other, dtype=complex)
        return theirs.shape == self._matrix.shape and bool(np.max(np.abs(self._matrix - theirs)) < atol)

    def __repr__(self) -> str:
        label = self.name or "Gate"
        return f"{label}({self.dimension}x{self.dimension})"


_STANDARD = {
    "H": Gate([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]], "H"),
    "X": Gate([[0, 1], [1, 0]], "X"),
    "Z": Gate([[1, 0], [0, -1]], "Z"),
    "I": Gate(np.eye(2), "I"),
    "CNOT": Gate([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], "CNOT"),
    "SWAP": Gate([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], "SWAP"),
}

GATE_NAMES = tuple(_STANDARD)


def standard_gate(name: str) -> Gate:
    try:
        return _STANDARD[name.upper()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown gate {name!r}; expected one of {', '.join(GATE_NAMES)}") from None


def _as_gate(g) -> Gate:
    return g if isinstance(g, Gate) else Gate(g)


def tensor(g1, g2) -> Gate:
    """Gates wired in parallel; ``g1`` acts on the first (most significant) qubit."""
    g1, g2 = _as_gate(g1), _as_gate(g2)
    if g1.dimension != 2 or g2.dimension != 2:
        raise DimensionError("tensor takes two single-qubit gates")
    name = f"{g1.name}⊗{g2.name}" if g1.name and g2.name else None
    return Gate(np.kron(g1.matrix, g2.matrix), name)


def compose(g_later, g_earlier) -> Gate:
    """Serial wiring: the result applies ``g_earlier`` first, then ``g_later``."""
    g_later, g_earlier = _as_gate(g_later), _as_gate(g_earlier)
    if g_later.dimension != g_earlier.dimension:
        raise DimensionError(f"cannot compose {g_later.dimension}x{g_later.dimension} "
                             f"with {g_earlier.dimension}x{g_earlier.dimension}")
    name = f"{g_later.name}·{g_earlier.name}" if g_later.name and g_earlier.name else None
    return Gate(g_later.matrix @ g_earlier.matrix, name)


def apply(state: StateVector, gate) -> StateVector:
    gate = _as_gate(gate)
    if gate.dimension != state.dimension:
        raise DimensionError(f"{gate!r} cannot act on a {state.dimension}-amplitude state")
    return StateVector(gate.matrix @ state.amplitudes)


def run_circuit(state: StateVector, gates: Iterable) -> StateVector:
    """Apply ``gates`` left to right (first element acts first)."""
    for g in gates:
        state = apply(state, g)
    return state


# Bell label -> computational basis input of the Hadamard-CNOT circuit.
BELL_INPUTS = {"phi+": "00", "psi+": "01", "phi-": "10", "psi-": "11"}


def bell_state(which: str) -> StateVector:
    """Run H on the first qubit then CNOT, starting from the matching basis state."""
    key = which.lower().replace("φ", "phi").replace("ψ", "psi").replace("⁺", "+").replace("⁻", "-")
    try:
        start = BELL_INPUTS[key]
    except KeyError:
        raise ValueError(f"unknown Bell state {which!r}") from None
    return run_circuit(StateVector.basis_state(start),
                       [tensor(_STANDARD["H"], _STANDARD["I"]), _STANDARD["CNOT"]])


class Basis:
    """Orthonormal measurement basis; ``vectors[j]`` is the j-th basis vector."""

    __slots__ = ("_matrix",)

    def __init__(self, vectors: Sequence[Sequence[complex]]):
        mat = np.array([np.asarray(v, dtype=complex) for v in vectors]).T
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError("basis needs as many vectors as their dimension")
        gram = mat.conj().T @ mat
        err = np.max(np.abs(gram - np.eye(mat.shape[0])))
        if err > ALGEBRA_TOL:
            raise ValueError(f"basis is not orthonormal (max |<vi|vj> - dij| = {err:.3g})")
        self._matrix = _frozen(mat)

    @classmethod
    def from_columns(cls, matrix) -> Basis:
        m = np.asarray(matrix.matrix if isinstance(matrix, Gate) else matrix, dtype=complex)
        return cls(list(m.T))

    @property
    def matrix(self) -> np.ndarray:
        """Basis vectors as columns."""
        return self._matrix

    @property
    def vectors(self) -> list[np.ndarray]:
        return [self._matrix[:, j] for j in range(self._matrix.shape[1])]

    def __len__(self) -> int:
        return self._matrix.shape[1]

    def probabilities(self, state: StateVector) -> np.ndarray:
        """|<v_j|psi>|^2 for every j, with sub-cutoff amplitudes forced to zero."""
        if state.dimension != self._matrix.shape[0]:
            raise DimensionError("state and basis dimensions differ")
        overlaps = self._matrix.conj().T @ state.amplitudes
        probs = np.abs(overlaps) ** 2
        probs[np.abs(overlaps) < ZERO_AMPLITUDE] = 0.0
        return probs / probs.sum()


def measure_in_basis(state: StateVector, basis: Basis, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Projective measurement.

    Returns the 0-based index ``j`` of the observed basis vector and the
    collapsed state ``vectors[j]``.  Outcomes whose amplitude is below
    ``ZERO_AMPLITUDE`` are never sampled.
    """
    probs = basis.probabilities(state)
    u = rng.random()
    # side="right" never lands on a zero-probability slot
    j = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    if j >= len(probs):
        j = int(np.flatnonzero(probs)[-1])
    return j, StateVector(basis.matrix[:, j])


@dataclass(frozen=True)
class RngSeed:
    """Seed for a tree of independent random streams.

    ``child(*key)`` derives a sub-seed; ``generator()`` builds the stream.
    Identical seed and path always give the identical stream.
    """

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if any(k < 0 for k in self.path):
            raise ValueError("stream keys must be non-negative")

    def child(self, *key: int) -> RngSeed:
        return RngSeed(self.seed, self.path + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.path)))

    @classmethod
    def fresh(cls) -> RngSeed:
        return cls(int(np.random.SeedSequence().generate_state(1, np.uint64)[0]))
