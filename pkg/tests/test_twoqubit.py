import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from magnonring.circuits import bond_gate_unitary
from magnonring.spin_algebra import BondCouplings
from magnonring.twoqubit import (
    CZ,
    NotUnitary,
    canonical_gate,
    cz_count_for,
    decompose_two_qubit,
    factor_local,
    kak,
    weyl_normal_form,
)

# magic basis used only for the invariant oracle
_Q = np.array([[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]]) / math.sqrt(2)


def makhlin_invariants(u):
    """Local invariants (G1, G2); equal invariants <=> equal up to single-qubit gates."""
    ub = _Q.conj().T @ u @ _Q
    m = ub.T @ ub
    det = np.linalg.det(u)
    tr = np.trace(m)
    return tr**2 / (16 * det), (tr**2 - np.trace(m @ m)) / (4 * det)


def _close_up_to_phase(a, b, tol=1e-9):
    ov = np.trace(a.conj().T @ b) / a.shape[0]
    return abs(abs(ov) - 1) < tol


def test_identity_and_cz_counts():
    assert decompose_two_qubit(np.eye(4)).n_cz == 0
    s = decompose_two_qubit(CZ)
    assert s.n_cz == 1 and _close_up_to_phase(s.matrix(), CZ)


def test_iswap_family_needs_two():
    u = canonical_gate(0.3, 0.3, 0.0)
    s = decompose_two_qubit(u)
    assert s.n_cz == 2 and s.fidelity > 1 - 1e-10


def test_generic_bond_gate_needs_three():
    bond = BondCouplings(-1.0667, -0.3556, 0.0, -0.1, -0.1, 0.0)
    s = decompose_two_qubit(bond_gate_unitary(bond, 0.225))
    assert s.n_cz == 3 and s.fidelity > 1 - 1e-10


def test_xy_bond_without_zz_needs_two():
    bond = BondCouplings(-1.0667, 0.0, 0.4, 0.0, 0.0, 0.0)
    assert decompose_two_qubit(bond_gate_unitary(bond, 0.4)).n_cz == 2


def test_bond_gate_matches_expm():
    import scipy.linalg as sla

    bond = BondCouplings(-1.0, -0.3, 0.2, 0.05, -0.07, 0.0)
    h = bond.operator(include_offset=False)
    assert np.allclose(bond_gate_unitary(bond, 0.37), sla.expm(-0.37j * h), atol=1e-12)
    assert np.allclose(bond_gate_unitary(bond, 0.0), np.eye(4))
    zz = BondCouplings(0.0, 0.8, 0.0)
    u = bond_gate_unitary(zz, 0.5)
    assert np.allclose(u, np.diag(np.diag(u)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_unitary_synthesis(seed):
    u = unitary_group.rvs(4, random_state=seed)
    dec = kak(u)
    assert np.allclose(dec.matrix(), u, atol=1e-9)
    coords, left, right, phase = weyl_normal_form(dec)
    assert np.allclose(phase * left @ canonical_gate(*coords) @ right, u, atol=1e-9)
    a, b, c = coords
    assert math.pi / 4 + 1e-12 >= a >= b >= abs(c) - 1e-12
    g_u = makhlin_invariants(u)
    g_c = makhlin_invariants(canonical_gate(*coords))
    assert np.allclose(g_u, g_c, atol=1e-9)
    s = decompose_two_qubit(u)
    assert s.n_cz == 3
    assert s.fidelity > 1 - 1e-9
    assert np.allclose(s.matrix(), u, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.integers(0, 1000))
def test_dressed_canonical_gates(a, b, c, seed):
    locals_ = [np.kron(unitary_group.rvs(2, random_state=seed + k), unitary_group.rvs(2, random_state=seed + 7 + k))
               for k in range(2)]
    u = locals_[0] @ canonical_gate(a, b, c) @ locals_[1]
    s = decompose_two_qubit(u)
    assert s.fidelity > 1 - 1e-8
    assert s.n_cz == cz_count_for(weyl_normal_form(kak(u))[0])


def test_factor_local_roundtrip():
    a, b = unitary_group.rvs(2, random_state=1), unitary_group.rvs(2, random_state=2)
    fa, fb = factor_local(np.kron(a, b))
    assert np.allclose(np.kron(fa, fb), np.kron(a, b))
    with pytest.raises(ValueError):
        factor_local(CZ)


def test_rejects_non_unitary():
    with pytest.raises(NotUnitary):
        decompose_two_qubit(2 * np.eye(4))
