"""HMP4: 4-bit strings as two-qubit states, their preparation circuits,
the two query bases and the classical membership check.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import sqrt
from typing import NamedTuple

import numpy as np

from .qsim import (
    Basis,
    Gate,
    StateVector,
    apply,
    bell_state,
    compose,
    measure_in_basis,
    product_state,
    standard_gate,
    tensor,
)


@dataclass(frozen=True)
class Bits4:
    """A string x = x1 x2 x3 x4.  ``x[1]`` .. ``x[4]`` index it like the maths does."""

    bits: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.bits) != 4 or any(b not in (0, 1) or isinstance(b, bool) for b in self.bits):
            raise ValueError(f"need exactly four bits, got {self.bits!r}")

    @classmethod
    def parse(cls, text: str) -> Bits4:
        if len(text) != 4 or set(text) - {"0", "1"}:
            raise ValueError(f"not a 4-bit string: {text!r}")
        return cls(tuple(int(c) for c in text))

    @classmethod
    def from_int(cls, value: int) -> Bits4:
        """x1 is the most significant bit, so ``from_int(6)`` is 0110."""
        if not 0 <= value < 16:
            raise ValueError(f"{value} does not fit in 4 bits")
        return cls(tuple((value >> (3 - i)) & 1 for i in range(4)))

    def __int__(self) -> int:
        return self.bits[0] << 3 | self.bits[1] << 2 | self.bits[2] << 1 | self.bits[3]

    def __getitem__(self, i: int) -> int:
        if not 1 <= i <= 4:
            raise IndexError("bit positions run from 1 to 4")
        return self.bits[i - 1]

    def __str__(self) -> str:
        return "".join(map(str, self.bits))

    def complement(self) -> Bits4:
        return Bits4(tuple(1 - b for b in self.bits))

    def signs(self) -> tuple[int, int, int, int]:
        return tuple(1 - 2 * b for b in self.bits)


ALL_STRINGS = tuple(Bits4.from_int(v) for v in range(16))


class Outcome(NamedTuple):
    """The pair (a, b) reported for one queried register."""

    a: int
    b: int


OUTCOMES = (Outcome(0, 0), Outcome(0, 1), Outcome(1, 0), Outcome(1, 1))


def encode(x: Bits4) -> StateVector:
    """|alpha(x)> = 1/2 * sum_i (-1)^{x_i} |i-1>, straight from the formula."""
    return StateVector(0.5 * np.array(x.signs(), dtype=complex))


# --- preparation circuits -----------------------------------------------------

_H, _X, _Z, _I = (standard_gate(n) for n in "HXZI")
H_I = tensor(_H, _I)
X_I = tensor(_X, _I)
Z_I = tensor(_Z, _I)
I_Z = tensor(_I, _Z)


@dataclass(frozen=True)
class PreparationCircuit:
    """Initial state plus a gate word, first gate applied first.

    The initial state is either the product of q1 = (alpha|0> + beta|1>)/sqrt2
    and q2 = (gamma|0> + delta|1>)/sqrt2 for sign choices ``signs``, or the
    Bell state named by ``bell``.
    """

    label: str
    signs: tuple[int, int, int, int] | None = None
    bell: str | None = None
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        if (self.signs is None) == (self.bell is None):
            raise ValueError("give exactly one of signs or bell")

    @property
    def entangled(self) -> bool:
        return self.bell is not None

    def initial_state(self) -> StateVector:
        if self.bell is not None:
            return bell_state(self.bell)
        alpha, beta, gamma, delta = self.signs
        r = 1 / sqrt(2)
        return product_state(StateVector([alpha * r, beta * r]), StateVector([gamma * r, delta * r]))

    def run(self) -> StateVector:
        state = self.initial_state()
        for gate in self.gates:
            state = apply(state, gate)
        return state

    def describe(self) -> str:
        if self.bell is None:
            start = "q1⊗q2 with (α,β,γ,δ)=({},{},{},{})".format(*self.signs)
        else:
            start = f"|{self.bell}>"
        word = " then ".join(g.name or "U" for g in self.gates)
        return f"{self.label}: {start}" + (f", then {word}" if word else "")


# Q-label, the string it encodes, and the circuit.  Q1..Q8 start from
# unentangled qubits, Q9..Q16 from Bell states.
_CIRCUITS: dict[str, PreparationCircuit] = {}
_BY_STRING: dict[str, str] = {}

for _label, _x, _kw in [
    ("Q1", "1100", dict(signs=(-1, 1, 1, 1))),
    ("Q2", "0011", dict(signs=(1, -1, 1, 1))),
    ("Q3", "1010", dict(signs=(1, 1, -1, 1))),
    ("Q4", "0101", dict(signs=(1, 1, 1, -1))),
    ("Q5", "1111", dict(signs=(-1, -1, 1, 1))),
    ("Q6", "0110", dict(signs=(-1, 1, -1, 1))),
    ("Q7", "1001", dict(signs=(-1, 1, 1, -1))),
    ("Q8", "0000", dict(signs=(-1, -1, -1, -1))),
    ("Q9", "0001", dict(bell="phi+", gates=(H_I,))),
    ("Q10", "0010", dict(bell="psi+", gates=(H_I,))),
    ("Q11", "0100", dict(bell="phi-", gates=(H_I,))),
    ("Q12", "1000", dict(bell="psi+", gates=(H_I, X_I))),
    ("Q13", "0111", dict(bell="phi-", gates=(H_I, Z_I))),
    ("Q14", "1011", dict(bell="psi+", gates=(H_I, X_I, Z_I))),
    ("Q15", "1101", dict(bell="psi+", gates=(H_I, X_I, I_Z))),
    ("Q16", "1110", dict(bell="psi+", gates=(H_I, X_I, Z_I, X_I))),
]:
    _CIRCUITS[_label] = PreparationCircuit(_label, **_kw)
    _BY_STRING[_x] = _label


def _check_circuit_table() -> None:
    if sorted(_BY_STRING) != sorted(str(x) for x in ALL_STRINGS):
        raise AssertionError("preparation table does not cover all 16 strings")
    for text, label in _BY_STRING.items():
        got = _CIRCUITS[label].run()
        if not got.allclose(encode(Bits4.parse(text))):
            raise AssertionError(f"{label} does not prepare |alpha({text})>: {got}")


_check_circuit_table()

Q_LABELS = {Bits4.parse(s): label for s, label in _BY_STRING.items()}


def preparation_circuit(x: Bits4) -> PreparationCircuit:
    return _CIRCUITS[_BY_STRING[str(x)]]


def circuit_by_label(label: str) -> PreparationCircuit:
    return _CIRCUITS[label]


def prepare(x: Bits4) -> StateVector:
    """Build |alpha(x)> by running its circuit (not the formula)."""
    return preparation_circuit(x).run()


# --- queries -------------------------------------------------------------------

_SWAP = standard_gate("SWAP")


@lru_cache(maxsize=2)
def query_basis(m: int) -> Basis:
    """m=0: columns of I⊗H.  m=1: columns of SWAP·(I⊗H)."""
    if m not in (0, 1):
        raise ValueError(f"query bit must be 0 or 1, got {m!r}")
    i_h = tensor(_I, _H)
    return Basis.from_columns(i_h if m == 0 else compose(_SWAP, i_h))


def run_query(state: StateVector, m: int, rng: np.random.Generator) -> Outcome:
    """Measure in the m-basis; v1..v4 map to (0,0), (0,1), (1,0), (1,1)."""
    j, _ = measure_in_basis(state, query_basis(m), rng)
    return OUTCOMES[j]


def run_query_collapsing(state: StateVector, m: int, rng: np.random.Generator) -> tuple[Outcome, StateVector]:
    j, collapsed = measure_in_basis(state, query_basis(m), rng)
    return OUTCOMES[j], collapsed


def hmp4_member(x: Bits4, m: int, a: int, b: int) -> bool:
    """(x, m, a, b) in HMP4, reading the bit operation as XOR."""
    bits = x.bits
    if a == 0:
        return b == bits[0] ^ bits[1 + m]
    return b == bits[2 - m] ^ bits[3]


# --- exact outcome probabilities (test oracle) ---------------------------------

# sqrt2 * v_j for each query basis, as integer columns.
_INT_COLUMNS = {
    m: tuple(tuple(int(round(c.real * sqrt(2))) for c in v) for v in query_basis(m).vectors)
    for m in (0, 1)
}


def integer_columns(m: int) -> tuple[tuple[int, ...], ...]:
    return _INT_COLUMNS[m]


def exact_probabilities(vector: tuple[int, ...], m: int) -> dict[Outcome, Fraction]:
    """Outcome probabilities for the state ``vector / |vector|`` (integer entries).

    |<v_j|s>|^2 = (c_j . s)^2 / (2 |s|^2) with c_j = sqrt2 * v_j.
    """
    norm_sq = sum(v * v for v in vector)
    return {
        out: Fraction(sum(c * s for c, s in zip(col, vector)) ** 2, 2 * norm_sq)
        for out, col in zip(OUTCOMES, _INT_COLUMNS[m])
    }


def support_table(x: Bits4, m: int) -> dict[Outcome, Fraction]:
    return exact_probabilities(x.signs(), m)
