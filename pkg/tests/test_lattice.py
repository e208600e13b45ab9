import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from magnonring.lattice import (
    LatticeSpec,
    WaveVector,
    build_supercell_chain,
    canonical_label,
    high_symmetry_point,
    twist_from_angle,
    twist_matrix,
)

LAT = LatticeSpec.honeycomb()


def test_deltas_equal_length_and_span():
    d = LAT.deltas
    lengths = np.linalg.norm(d, axis=1)
    assert np.allclose(lengths, 1 / math.sqrt(3))
    # three NN vectors of a honeycomb sum to zero in this convention
    assert np.allclose(d.sum(axis=0), 0.0)
    assert abs(np.linalg.det(np.array([LAT.vec_a1, LAT.vec_a2]))) > 0.1


def test_reciprocal_duality():
    b1, b2 = LAT.reciprocal()
    a = np.array([LAT.vec_a1, LAT.vec_a2])
    assert np.allclose(a @ np.array([b1, b2]).T, 2 * math.pi * np.eye(2))


@pytest.mark.parametrize("n_cells, n_sites, mult", [(1, 2, 3), (3, 6, 9), (9, 18, 27)])
def test_chain_sizes(n_cells, n_sites, mult):
    ch = build_supercell_chain(n_cells)
    assert ch.n_sites == n_sites
    assert len(ch.ring_bonds) == n_sites
    assert ch.total_multiplicity() == mult


def test_single_cell_bonds_carry_all_three_neighbors():
    ch = build_supercell_chain(1)
    neighbors = sorted(d.neighbor for b in ch.ring_bonds for d in b.displacements)
    assert neighbors == [0, 1, 2]
    assert {(b.i, b.j) for b in ch.ring_bonds} == {(0, 1), (1, 0)}


def _honeycomb_bonds(n_cells):
    """Brute-force NN enumeration on the wrapped N x 1 supercell."""
    sites = []
    for c in range(n_cells):
        sites.append(("A", c, LAT.basis_A + c * LAT.vec_a1))
        sites.append(("B", c, LAT.basis_B + c * LAT.vec_a1))
    found = []
    for sa, ca, ra in sites:
        if sa != "A":
            continue
        for sb, cb, rb in sites:
            if sb != "B":
                continue
            for m in range(-1, 2):
                for k in range(-1, 2):
                    shift = m * n_cells * LAT.vec_a1 + k * LAT.vec_a2
                    if abs(np.linalg.norm(rb + shift - ra) - 1 / math.sqrt(3)) < 1e-9:
                        found.append((ca, cb, tuple(np.round(rb + shift - ra, 9))))
    return found


@pytest.mark.parametrize("n_cells", [1, 2, 3, 5])
def test_every_honeycomb_bond_folds_onto_one_ring_bond(n_cells):
    ch = build_supercell_chain(n_cells)
    folded = []
    for b in ch.ring_bonds:
        for d in b.displacements:
            a_site = b.i if d.sign > 0 else b.j
            b_site = b.j if d.sign > 0 else b.i
            vec = np.array(d.vector) * d.sign
            folded.append((a_site // 2, b_site // 2, tuple(np.round(vec, 9))))
    assert sorted(folded) == sorted(_honeycomb_bonds(n_cells))


@given(st.integers(min_value=1, max_value=40))
def test_ring_is_single_cycle(n_cells):
    ch = build_supercell_chain(n_cells)
    assert ch.is_single_cycle()
    assert ch.total_multiplicity() == 3 * n_cells


@pytest.mark.parametrize("bad", [0, -2, 1.5])
def test_chain_rejects_bad_sizes(bad):
    with pytest.raises(ValueError):
        build_supercell_chain(bad)


def test_twist_examples():
    m = twist_matrix(3.2, 3.2, LAT.deltas[0], high_symmetry_point("G")).matrix
    assert np.allclose(m, 3.2 * np.eye(3))
    m = twist_from_angle(1.0, 0.0, math.pi / 2).matrix
    assert np.allclose(m, [[0, 1, 0], [-1, 0, 0], [0, 0, 0]], atol=1e-15)
    m = twist_from_angle(1.0, 1.0, math.pi).matrix
    assert np.allclose(m, np.diag([-1.0, -1.0, 1.0]), atol=1e-15)


@given(
    st.floats(-10, 10), st.floats(-10, 10),
    st.floats(0, 5), st.floats(0, 5), st.integers(0, 2),
)
def test_twist_at_minus_q_is_transpose(qx, qy, ap, az, nb):
    d = LAT.deltas[nb]
    plus = twist_matrix(ap, az, d, WaveVector(qx, qy)).matrix
    minus = twist_matrix(ap, az, d, WaveVector(-qx, -qy)).matrix
    assert np.allclose(plus[:2, :2], minus[:2, :2].T, atol=1e-12)
    assert plus[2, 2] == az
    assert np.all(plus[:2, 2] == 0) and np.all(plus[2, :2] == 0)
    # upper block is a_perp times a proper rotation
    blk = plus[:2, :2]
    if ap > 1e-3:
        assert np.allclose(blk @ blk.T, ap**2 * np.eye(2), atol=1e-9)
        assert np.linalg.det(blk) > 0


def test_gamma_sum_reduces_to_multiplicity():
    g = high_symmetry_point("G")
    for b in build_supercell_chain(3).ring_bonds:
        total = sum(twist_matrix(3.2, 2.0, d.vector, g).matrix for d in b.displacements)
        assert np.allclose(total, b.multiplicity * np.diag([3.2, 3.2, 2.0]))


def test_high_symmetry_points():
    b1, b2 = LAT.reciprocal()
    assert np.allclose(high_symmetry_point("Γ").vec, 0.0)
    k = high_symmetry_point("K").vec
    assert math.isclose(np.linalg.norm(k), 4 * math.pi / 3, rel_tol=1e-12)
    assert np.allclose(high_symmetry_point("M").vec, 0.5 * b2)
    assert math.isclose(np.linalg.norm(high_symmetry_point("M").vec), 2 * math.pi / math.sqrt(3))


def test_high_symmetry_points_scale_with_lattice_constant():
    lat2 = LatticeSpec.honeycomb(2.0)
    for lab in "GKM":
        assert np.allclose(high_symmetry_point(lab, lat2).vec, 0.5 * high_symmetry_point(lab).vec)


def test_label_aliases():
    assert canonical_label("Gamma") == canonical_label("Γ") == "G"
    with pytest.raises((KeyError, ValueError)):
        canonical_label("X")


def test_wavevector_roundtrip():
    q = high_symmetry_point("K")
    assert WaveVector.from_dict(q.to_dict()) == q
