import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualpqc.ansatz import AnsatzSpec, build_circuit, param_count, run_ansatz, run_ansatz_batch
from dualpqc.errors import DomainError
from dualpqc.qsim import Statevector, basis_state, probabilities
from oracles import ansatz_gates, circuit_unitary


@pytest.mark.parametrize("n, k, expected", [(3, 2, 9), (4, 0, 4), (4, 16, 68), (4, 2, 12), (4, 6, 28)])
def test_param_count(n, k, expected):
    assert param_count(AnsatzSpec(n, k)) == expected


def test_two_qubit_depth_one_layout():
    a, b, c, d = 0.1, 0.2, 0.3, 0.4
    gates = build_circuit(AnsatzSpec(2, 1), [a, b, c, d])
    assert [repr(g) for g in gates] == ["RY(0.1)@0", "RY(0.2)@1", "CZ(0, 1)", "RY(0.3)@0", "RY(0.4)@1"]


def test_single_qubit_has_no_cz():
    gates = build_circuit(AnsatzSpec(1, 3), np.zeros(4))
    assert [g.kind for g in gates] == ["RY"] * 4


@pytest.mark.parametrize("n, k", [(3, 2), (4, 16), (5, 3), (2, 0)])
def test_gate_count_identity(n, k):
    gates = build_circuit(AnsatzSpec(n, k), np.zeros(n * (k + 1)))
    kinds = [g.kind for g in gates]
    assert kinds.count("RY") == n * (k + 1)
    assert kinds.count("CZ") == k * (n - 1)


def test_cz_ladder_is_ascending_nearest_neighbour():
    gates = build_circuit(AnsatzSpec(4, 1), np.zeros(8))
    assert [g.qubits for g in gates if g.kind == "CZ"] == [(0, 1), (1, 2), (2, 3)]


def test_param_layout_layer_major():
    params = np.arange(12, dtype=float)
    gates = build_circuit(AnsatzSpec(4, 2), params)
    last_layer = [g for g in gates if g.kind == "RY"][-4:]
    assert [(g.qubits[0], g.angle) for g in last_layer] == [(0, 8.0), (1, 9.0), (2, 10.0), (3, 11.0)]


def test_length_mismatch():
    with pytest.raises(DomainError):
        build_circuit(AnsatzSpec(3, 1), np.zeros(5))


def test_qubit_count_mismatch():
    with pytest.raises(DomainError):
        run_ansatz(AnsatzSpec(3, 1), np.zeros(6), basis_state(2, 0))


def test_zero_params_fix_all_zero_state():
    out = run_ansatz(AnsatzSpec(4, 3), np.zeros(16), basis_state(4, 0))
    np.testing.assert_array_equal(out.amplitudes, basis_state(4, 0).amplitudes)


@pytest.mark.parametrize("i", range(8))
def test_zero_params_keep_basis_probabilities(i):
    out = run_ansatz(AnsatzSpec(3, 2), np.zeros(9), basis_state(3, i))
    assert abs(abs(out.amplitudes[i]) - 1) < 1e-15
    np.testing.assert_array_equal(probabilities(out), probabilities(basis_state(3, i)))


def test_random_ansatz_matches_dense_oracle():
    rng = np.random.default_rng(2)
    for n, k in [(2, 1), (3, 2), (4, 5)]:
        params = rng.uniform(-np.pi, np.pi, n * (k + 1))
        v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
        psi = Statevector(n, v / np.linalg.norm(v))
        expected = circuit_unitary(ansatz_gates(n, k, params), n) @ psi.amplitudes
        np.testing.assert_allclose(run_ansatz(AnsatzSpec(n, k), params, psi).amplitudes, expected, atol=1e-12)


def test_batch_matches_rowwise():
    rng = np.random.default_rng(4)
    spec = AnsatzSpec(3, 2)
    params = rng.normal(size=(5, 9))
    inputs = np.array([basis_state(3, i).amplitudes for i in range(5)])
    batch = run_ansatz_batch(spec, params, inputs)
    for r in range(5):
        row = run_ansatz(spec, params[r], basis_state(3, r)).amplitudes
        np.testing.assert_array_equal(batch[r], row)


@settings(max_examples=500, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4), k=st.integers(0, 4), data=st.data())
def test_4pi_shift_leaves_state_unchanged(seed, n, k, data):
    rng = np.random.default_rng(seed)
    spec = AnsatzSpec(n, k)
    params = rng.uniform(-np.pi, np.pi, param_count(spec))
    r = data.draw(st.integers(0, param_count(spec) - 1))
    shifted = params.copy()
    shifted[r] += 4 * np.pi
    psi = basis_state(n, int(rng.integers(2**n)))
    a = run_ansatz(spec, params, psi).amplitudes
    b = run_ansatz(spec, shifted, psi).amplitudes
    assert np.max(np.abs(a - b)) < 1e-12


@settings(max_examples=500, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4), k=st.integers(0, 4))
def test_zero_params_preserve_probabilities(seed, n, k):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    psi = Statevector(n, v / np.linalg.norm(v))
    out = run_ansatz(AnsatzSpec(n, k), np.zeros(n * (k + 1)), psi)
    assert np.max(np.abs(probabilities(out) - probabilities(psi))) < 1e-12
