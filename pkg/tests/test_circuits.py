import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magnonring.circuits import (
    CZ_PAULI_TABLE,
    PAULIS,
    Circuit,
    Gate,
    TrexRecord,
    apply_gates,
    attach_trex,
    build_trotter_circuit,
    pauli_twirl,
    prepare_quench,
    trotter_step_unitary,
)
from magnonring.hamiltonian import total_sz_diag
from magnonring.propagators import measure_sites
from magnonring.twoqubit import CZ


def _run(circ):
    psi = np.zeros(1 << circ.n_qubits, dtype=complex)
    psi[0] = 1.0
    return apply_gates(psi, circ)


def test_quench_fragment():
    assert prepare_quench(18).count("RX") == 9
    assert prepare_quench(6, 0.0).depth == 0
    psi = _run(prepare_quench(6))
    sx, sy, sz = measure_sites(psi, 6)
    assert np.allclose(sz[:3], 0.5 * math.cos(0.3 * math.pi))
    psi = _run(prepare_quench(6, math.pi))
    sx, sy, sz = measure_sites(psi, 6)
    assert np.allclose(sx + 1j * sy, 0.0, atol=1e-15)
    assert np.allclose(sz, [-0.5] * 3 + [0.5] * 3)


def test_zero_step_circuit_reproduces_product_state(model_factory):
    circ = build_trotter_circuit(model_factory("M", 3), 0.225, 0)
    assert circ.cz_count == 0
    sx, sy, sz = measure_sites(_run(circ), 6)
    assert np.allclose(sy[:3], -0.5 * math.sin(0.3 * math.pi))


@pytest.mark.parametrize("label", ["G", "K", "M"])
@pytest.mark.parametrize("n_cells", [1, 2, 3])
def test_compiled_step_matches_exact_bond_product(label, n_cells, model_factory):
    m = model_factory(label, n_cells)
    circ = build_trotter_circuit(m, 0.3, 1, quench=Circuit(m.n_sites), basis=None)
    u = circ.unitary()
    ref = trotter_step_unitary(m, 0.3)
    ov = np.trace(ref.conj().T @ u) / u.shape[0]
    assert abs(abs(ov) - 1) < 1e-10


@pytest.mark.parametrize("n_cells", [3, 6, 9, 12])
@pytest.mark.parametrize("label, cz, depth", [("G", 3, 6), ("K", 3, 6), ("M", 2.5, 5)])
def test_gate_accounting(n_cells, label, cz, depth, model_factory):
    m = model_factory(label, n_cells)
    circ = build_trotter_circuit(m, 0.3, 2)
    assert circ.metadata["cz_per_step"] == cz * m.n_sites
    assert circ.metadata["two_qubit_depth_per_step"] == depth
    assert circ.cz_count == 2 * cz * m.n_sites
    assert circ.two_qubit_depth == 2 * depth


def test_measurement_basis_and_validation(model_factory):
    m = model_factory("G", 1)
    assert build_trotter_circuit(m, 0.1, 1, basis="y").measurement_basis() == "Y"
    with pytest.raises(ValueError):
        build_trotter_circuit(m, 0.1, 1, basis="W")
    with pytest.raises(ValueError):
        build_trotter_circuit(m, 0.1, -1)


def test_noiseless_magnetization_conserved(model_factory):
    m = model_factory("K", 3)
    circ = build_trotter_circuit(m, 0.445 / 3.2, 5)
    psi = _run(circ)
    sz = total_sz_diag(6)
    psi0 = _run(prepare_quench(6))
    assert abs(np.vdot(psi, sz * psi) - np.vdot(psi0, sz * psi0)) < 1e-10


def test_cz_pauli_table_is_conjugation():
    for (a, b), (a2, b2) in CZ_PAULI_TABLE.items():
        lhs = CZ @ np.kron(PAULIS[a], PAULIS[b]) @ CZ
        rhs = np.kron(PAULIS[a2], PAULIS[b2])
        assert np.allclose(lhs, rhs) or np.allclose(lhs, -rhs)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_twirl_preserves_unitary(seed):
    from magnonring.hamiltonian import build_model

    m = build_model("CrBr3", "M", 2)
    circ = build_trotter_circuit(m, 0.225, 2)
    tw = pauli_twirl(circ, seed)
    a, b = circ.unitary(), tw.unitary()
    ov = np.trace(a.conj().T @ b) / a.shape[0]
    assert abs(abs(ov) - 1) < 1e-10
    assert tw.cz_count == circ.cz_count
    assert tw.two_qubit_depth == circ.two_qubit_depth
    assert tw.metadata["twirl_seed"] == seed


def test_twirl_is_deterministic(model_factory):
    circ = build_trotter_circuit(model_factory("G", 2), 0.1, 2)
    assert pauli_twirl(circ, 5).to_text() == pauli_twirl(circ, 5).to_text()
    assert pauli_twirl(circ, 5).to_text() != pauli_twirl(circ, 6).to_text()


def test_trex_attachment(model_factory):
    circ = build_trotter_circuit(model_factory("G", 2), 0.1, 1)
    same = attach_trex(circ, mask=(0, 0, 0, 0))
    assert same.moments == circ.moments
    flipped = attach_trex(circ, mask=(0, 1, 0, 0))
    assert flipped.moments[-2] == [Gate("FLIP", (1,))]
    assert flipped.metadata["trex_mask"] == [0, 1, 0, 0]
    assert np.allclose(_run(flipped), _run(circ))
    with pytest.raises(ValueError):
        attach_trex(Circuit(2), mask=(0, 0))
    with pytest.raises(ValueError):
        TrexRecord((0, 2))


def test_text_roundtrip(model_factory):
    circ = attach_trex(pauli_twirl(build_trotter_circuit(model_factory("K", 2), 0.14, 2), 3), mask=(1, 0, 1, 1))
    back = Circuit.from_text(circ.to_text())
    assert back.moments == circ.moments and back.metadata == circ.metadata


def test_moment_validation():
    c = Circuit(3)
    with pytest.raises(ValueError):
        c.append([Gate("RX", (0,), (0.1,)), Gate("RZ", (0,), (0.2,))])
    with pytest.raises(ValueError):
        c.append([Gate("RX", (0,), (0.1,)), Gate("CZ", (1, 2))])
    with pytest.raises(ValueError):
        Gate("CZ", (1, 1))
