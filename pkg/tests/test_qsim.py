from math import sqrt

import numpy as np
import pytest
from conftest import within_sigmas
from hypothesis import given, settings
from hypothesis import strategies as st

from qcoin.qsim import (
    GATE_NAMES,
    Basis,
    DimensionError,
    Gate,
    NotUnitaryError,
    RngSeed,
    StateVector,
    apply,
    bell_state,
    compose,
    equal_up_to_phase,
    measure_in_basis,
    product_state,
    run_circuit,
    standard_gate,
    tensor,
)

r = 1 / sqrt(2)
H, X, Z, I, CNOT, SWAP = (standard_gate(n) for n in ("H", "X", "Z", "I", "CNOT", "SWAP"))


def ket(bits):
    return StateVector.basis_state(bits)


class TestStateVector:
    def test_normalization_enforced(self):
        with pytest.raises(ValueError):
            StateVector([1, 1, 0, 0])
        with pytest.raises(ValueError):
            StateVector([0, 0, 0, 0])

    def test_dimension_checked(self):
        with pytest.raises(DimensionError):
            StateVector([1, 0, 0])

    def test_big_endian_basis_index(self):
        assert ket("10").amplitudes[2] == 1
        assert ket("01").amplitudes[1] == 1

    def test_immutable(self):
        s = ket("00")
        with pytest.raises(ValueError):
            s.amplitudes[0] = 0

    def test_phase_comparison(self):
        s = StateVector([0.5, 0.5, 0.5, -0.5])
        assert not s.allclose(-s)
        assert equal_up_to_phase(s, -s)
        assert equal_up_to_phase(s, StateVector(1j * s.amplitudes))
        assert not equal_up_to_phase(s, StateVector([0.5, 0.5, -0.5, 0.5]))

    def test_product_state_ordering(self):
        # |1> (x) |0> = |10>
        assert product_state(StateVector([0, 1]), StateVector([1, 0])).allclose(ket("10"))


class TestGates:
    def test_hadamard(self):
        assert np.allclose(H.matrix, r * np.array([[1, 1], [1, -1]]), atol=1e-15)

    def test_identity(self):
        assert np.array_equal(I.matrix, np.eye(2))

    def test_swap(self):
        assert np.array_equal(SWAP.matrix, [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])

    def test_cnot_flips_second_qubit(self):
        assert apply(ket("10"), CNOT).allclose(ket("11"))
        assert apply(ket("00"), CNOT).allclose(ket("00"))

    def test_unknown_gate(self):
        with pytest.raises(ValueError, match="unknown gate"):
            standard_gate("T")

    def test_non_unitary_rejected(self):
        with pytest.raises(NotUnitaryError):
            Gate([[1, 1], [0, 1]])
        with pytest.raises(NotUnitaryError):
            apply(ket("00"), np.eye(4) * 2)

    @pytest.mark.parametrize("name", GATE_NAMES)
    def test_standard_gates_unitary(self, name):
        m = standard_gate(name).matrix
        assert np.max(np.abs(m.conj().T @ m - np.eye(len(m)))) < 1e-12

    def test_tensor_identity(self):
        assert np.array_equal(tensor(I, I).matrix, np.eye(4))

    def test_tensor_i_h(self):
        expected = r * np.array([[1, 1, 0, 0], [1, -1, 0, 0], [0, 0, 1, 1], [0, 0, 1, -1]])
        assert np.max(np.abs(tensor(I, H).matrix - expected)) < 1e-12

    def test_tensor_rejects_4x4(self):
        with pytest.raises(DimensionError):
            tensor(CNOT, I)

    def test_compose_examples(self):
        u = tensor(H, Z)
        assert compose(tensor(I, I), u).allclose(u)
        expected = r * np.array([[1, 1, 0, 0], [0, 0, 1, 1], [1, -1, 0, 0], [0, 0, 1, -1]])
        assert np.max(np.abs(compose(SWAP, tensor(I, H)).matrix - expected)) < 1e-12
        assert np.max(np.abs(compose(tensor(X, I), tensor(X, I)).matrix - np.eye(4))) < 1e-12

    def test_compose_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            compose(CNOT, H)


class TestApply:
    def test_h_i_on_phi_plus(self):
        phi = StateVector([r, 0, 0, r])
        assert apply(phi, tensor(H, I)).allclose([0.5, 0.5, 0.5, -0.5])

    def test_x_i_on_q10(self):
        assert apply(StateVector([0.5, 0.5, -0.5, 0.5]), tensor(X, I)).allclose([-0.5, 0.5, 0.5, 0.5])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            apply(ket("0"), CNOT)

    def test_run_circuit_order(self):
        # H on qubit 1 then CNOT gives Phi+; the reverse order does not
        assert run_circuit(ket("00"), [tensor(H, I), CNOT]).allclose([r, 0, 0, r])
        assert not run_circuit(ket("00"), [CNOT, tensor(H, I)]).allclose([r, 0, 0, r])


class TestBell:
    @pytest.mark.parametrize("which,expected", [
        ("phi+", [r, 0, 0, r]),
        ("phi-", [r, 0, 0, -r]),
        ("psi+", [0, r, r, 0]),
        ("psi-", [0, r, -r, 0]),
    ])
    def test_vectors(self, which, expected):
        assert bell_state(which).allclose(expected)

    def test_unicode_labels(self):
        assert bell_state("Φ⁺").allclose(bell_state("phi+"))
        assert bell_state("Ψ⁻").allclose(bell_state("psi-"))

    def test_circuit_from_00(self):
        assert apply(apply(ket("00"), tensor(H, I)), CNOT).allclose(bell_state("phi+"))

    def test_unknown(self):
        with pytest.raises(ValueError):
            bell_state("chi")


class TestBasisAndMeasurement:
    def test_orthonormality_enforced(self):
        with pytest.raises(ValueError, match="orthonormal"):
            Basis([[1, 0, 0, 0], [r, r, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])

    def test_eigenstate_is_deterministic(self):
        basis = Basis.from_columns(tensor(I, H))
        g = np.random.default_rng(0)
        v2 = StateVector(basis.vectors[1])
        for _ in range(200):
            j, after = measure_in_basis(v2, basis, g)
            assert j == 1 and after.allclose(v2)

    def test_zero_amplitude_never_sampled(self):
        basis = Basis.from_columns(tensor(I, H))
        state = StateVector([0.5] * 4)  # |alpha(0000)>: only v1 and v3
        g = np.random.default_rng(3)
        seen = {measure_in_basis(state, basis, g)[0] for _ in range(2000)}
        assert seen == {0, 2}

    def test_probabilities_by_hand(self):
        # (1/2)[1,1,1,-1] against v1..v4 of the m=0 basis: the inner products
        # are (1+1)/(2 sqrt2), 0, 0, (1+1)/(2 sqrt2), so two outcomes at 1/2
        # (not four at 1/4)
        basis = Basis.from_columns(tensor(I, H))
        probs = basis.probabilities(StateVector([0.5, 0.5, 0.5, -0.5]))
        assert np.max(np.abs(probs - [0.5, 0, 0, 0.5])) < 1e-12

    def test_uniform_outcomes(self):
        basis = Basis.from_columns(tensor(I, H))
        probs = basis.probabilities(StateVector([0.5, 0.5j, 0.5, -0.5j]))
        assert np.max(np.abs(probs - 0.25)) < 1e-12

    def test_statistics_within_4_sigma(self):
        # a state with four unequal outcome probabilities
        state = StateVector(np.array([0.8, 0.1 + 0.3j, -0.2, 0.4j]) / np.linalg.norm([0.8, 0.1 + 0.3j, -0.2, 0.4j]))
        basis = Basis.from_columns(compose(SWAP, tensor(I, H)))
        expected = basis.probabilities(state)
        g = RngSeed(11).generator()
        trials = 100_000
        counts = np.zeros(4, dtype=int)
        for _ in range(trials):
            counts[measure_in_basis(state, basis, g)[0]] += 1
        for c, p in zip(counts, expected):
            assert within_sigmas(int(c), trials, float(p))

    def test_collapsed_state_is_basis_vector(self):
        basis = Basis.from_columns(tensor(I, H))
        j, after = measure_in_basis(StateVector([0.5, -0.5, -0.5, 0.5]), basis, np.random.default_rng(5))
        assert after.allclose(basis.vectors[j])


class TestRngSeed:
    def test_determinism(self):
        a = RngSeed(42).child(3, 1).generator().random(10)
        b = RngSeed(42).child(3, 1).generator().random(10)
        assert np.array_equal(a, b)

    def test_children_differ(self):
        assert not np.array_equal(RngSeed(42).child(0).generator().random(5),
                                  RngSeed(42).child(1).generator().random(5))

    def test_range(self):
        with pytest.raises(ValueError):
            RngSeed(-1)
        with pytest.raises(ValueError):
            RngSeed(2 ** 64)


# --- properties -------------------------------------------------------------------

_FOUR_QUBIT_GATES = [tensor(a, b) for a in (H, X, Z, I) for b in (H, X, Z, I)] + [CNOT, SWAP]

_component = st.floats(-1, 1, allow_nan=False)
_state = st.lists(st.tuples(_component, _component), min_size=4, max_size=4).filter(
    lambda v: sum(a * a + b * b for a, b in v) > 1e-3
).map(lambda v: StateVector(np.array([complex(a, b) for a, b in v]) / np.sqrt(sum(a * a + b * b for a, b in v))))
_gate = st.sampled_from(_FOUR_QUBIT_GATES)


@settings(max_examples=10_000, deadline=None)
@given(_state, st.lists(_gate, max_size=8))
def test_norm_preserved(state, word):
    assert abs(run_circuit(state, word).norm() - 1) < 1e-9


@settings(max_examples=500, deadline=None)
@given(_state, st.lists(_gate, min_size=1, max_size=4), st.lists(_gate, min_size=1, max_size=4))
def test_composition_law(state, word_a, word_b):
    a = word_a[0]
    for g in word_a[1:]:
        a = compose(g, a)
    b = word_b[0]
    for g in word_b[1:]:
        b = compose(g, b)
    assert apply(apply(state, a), b).max_error(apply(state, compose(b, a))) < 1e-12


@pytest.mark.parametrize("a", _FOUR_QUBIT_GATES)
def test_products_unitary(a):
    for b in _FOUR_QUBIT_GATES:
        m = compose(a, b).matrix
        assert np.max(np.abs(m.conj().T @ m - np.eye(4))) < 1e-12
