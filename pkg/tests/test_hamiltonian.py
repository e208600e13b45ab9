import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import spin_wave_band
from magnonring.hamiltonian import (
    EffectiveRingModel,
    PRESETS,
    RingOperator,
    SizeLimit,
    assemble_effective_ring,
    assemble_microscopic,
    build_model,
    commutator_norm_sum,
    coupling_from_J,
    fm_energy,
    lie_trotter_error_estimate,
    magnetization_sectors,
    material_preset,
    one_magnon_band,
    quartet_dense_hamiltonian,
    quartet_one_magnon_block,
    sparse_hamiltonian,
    total_sz_diag,
)
from magnonring.lattice import WaveVector, build_supercell_chain, high_symmetry_point


def test_presets_exact():
    assert (PRESETS["CrCl3"].A, PRESETS["CrCl3"].a_bare, PRESETS["CrCl3"].a_renorm) == (443.8, 3.4, 2.7)
    assert (PRESETS["CrBr3"].A, PRESETS["CrBr3"].a_bare, PRESETS["CrBr3"].a_renorm) == (438.8, 3.2, 3.1)
    assert (PRESETS["CrI3"].A, PRESETS["CrI3"].a_bare, PRESETS["CrI3"].a_renorm) == (429.9, 3.0, 3.7)
    assert material_preset("crbr3") is PRESETS["CrBr3"]
    with pytest.raises(ValueError):
        material_preset("CrF3")


def test_coupling_choice():
    p = material_preset("CrI3")
    assert p.coupling("bare") == 3.0 and p.coupling("renorm") == 3.7
    with pytest.raises(ValueError):
        p.coupling("other")
    assert coupling_from_J(4.0) == 9.0


@pytest.mark.parametrize("label", ["G", "K", "M"])
@pytest.mark.parametrize("n_cells", [1, 2, 3, 4])
def test_band_matches_spin_wave_closed_form(label, n_cells, model_factory):
    m = model_factory(label, n_cells)
    assert np.allclose(one_magnon_band(m, centered=False), spin_wave_band(m, 3.2), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-8, 8), st.floats(-8, 8), st.integers(1, 6), st.floats(0.5, 4.0))
def test_band_matches_spin_wave_at_arbitrary_q(qx, qy, n_cells, a):
    m = assemble_effective_ring(
        build_supercell_chain(n_cells), material_preset("CrBr3"), WaveVector(qx, qy), a_perp=a, a_parallel=a
    )
    assert np.allclose(one_magnon_band(m, centered=False), spin_wave_band(m, a), atol=1e-10)


def test_m_point_has_two_flat_levels(model_factory):
    band = one_magnon_band(model_factory("M", 9), centered=False)
    levels = sorted(set(np.round(band, 9)))
    assert levels == pytest.approx([3.2 / 3, 2 * 3.2 / 3])


def test_gamma_acoustic_mode_softens():
    mins = [one_magnon_band(build_model("CrBr3", "G", nc), centered=False)[0] for nc in (3, 6, 12)]
    assert abs(mins[0]) < 1e-12 and abs(mins[-1]) < 1e-12


def test_gamma_model_has_no_cross_terms_and_zero_centered_fields(model_factory):
    m = model_factory("G", 3)
    assert all(abs(b.couplings.j_cross) < 1e-12 for b in m.bonds)
    assert np.allclose(m.centered_fields, 0.0, atol=1e-12)
    for label in "KM":
        assert np.allclose(model_factory(label, 3).centered_fields, 0.0, atol=1e-12)


def test_alpha_is_minus_a_over_three(model_factory):
    for label in "GKM":
        assert model_factory(label, 3).alpha == pytest.approx(-3.2 / 3, abs=1e-12)


@pytest.mark.parametrize("n_cells", [1, 2])
@pytest.mark.parametrize("label", ["G", "K", "M"])
def test_one_magnon_block_matches_dense_quartet(n_cells, label):
    chain = build_supercell_chain(n_cells)
    q = high_symmetry_point(label)
    p = material_preset("CrBr3")
    e_fm, block = quartet_one_magnon_block(chain, p, q)
    h = quartet_dense_hamiltonian(chain, p, q)
    n = chain.n_sites
    # states with exactly one center at the m = 1/2 level
    idx = [4 ** (n - 1 - k) for k in range(n)]
    assert h[0, 0].real == pytest.approx(e_fm, abs=1e-9)
    assert np.allclose(h[np.ix_(idx, idx)], block, atol=1e-10)


@pytest.mark.parametrize("label", ["G", "K", "M"])
def test_fm_eigen_residual(label, model_factory):
    m = model_factory(label, 4)
    op = RingOperator(m)
    psi = np.zeros(1 << m.n_sites, dtype=complex)
    psi[0] = 1.0
    e = fm_energy(m)
    assert np.linalg.norm(op.apply(psi) - e * psi) <= 1e-10


@pytest.mark.parametrize("label", ["G", "K", "M"])
def test_ring_operator_matches_sparse(label, model_factory, rng):
    m = model_factory(label, 4)
    h = sparse_hamiltonian(m)
    psi = rng.normal(size=1 << 8) + 1j * rng.normal(size=1 << 8)
    assert np.allclose(RingOperator(m).apply(psi), h @ psi, atol=1e-12)
    assert abs(h - h.conj().T).max() < 1e-14
    sz = sp.diags(total_sz_diag(8))
    assert abs(h @ sz - sz @ h).max() < 1e-10


def test_centering_only_shifts_sectors(model_factory):
    m = model_factory("K", 3)
    hc = sparse_hamiltonian(m, centered=True).toarray()
    hu = sparse_hamiltonian(m, centered=False).toarray()
    for k, idx in magnetization_sectors(6).items():
        ec = np.linalg.eigvalsh(hc[np.ix_(idx, idx)])
        eu = np.linalg.eigvalsh(hu[np.ix_(idx, idx)])
        assert np.allclose(np.diff(ec), np.diff(eu), atol=1e-12)
        # uncentered = centered + alpha * S^z_tot
        assert np.allclose(eu - ec, m.alpha * (3 - k), atol=1e-12)


def test_model_json_roundtrip(model_factory):
    m = model_factory("M", 3)
    back = EffectiveRingModel.from_dict(m.to_dict())
    assert np.allclose(one_magnon_band(back), one_magnon_band(m))
    assert back.alpha == m.alpha and back.e_offset == m.e_offset


def test_microscopic_ground_multiplet():
    chain = build_supercell_chain(1)
    h = assemble_microscopic(chain, material_preset("CrBr3"), high_symmetry_point("G")).toarray()
    ev = np.linalg.eigvalsh(h)
    assert np.sum(np.abs(ev - ev[0]) < 1e-9) == 7


def test_microscopic_decoupled_triangles():
    chain = build_supercell_chain(1)
    p = material_preset("CrBr3")
    h = assemble_microscopic(chain, p, high_symmetry_point("G"), a_perp=0.0, a_parallel=0.0).toarray()
    levels = sorted(set(np.round(np.linalg.eigvalsh(h), 8)))
    # each triangle: -3A/4 (quartet, 4 states) and +3A/4 (two doublets, 4 states)
    assert levels == pytest.approx([-1.5 * p.A, 0.0, 1.5 * p.A])


def _micro_one_magnon(A, label):
    chain = build_supercell_chain(1)
    h = assemble_microscopic(chain, material_preset("CrBr3"), high_symmetry_point(label), A=A)
    h = h.toarray()
    n = 6
    idx = magnetization_sectors(n)[1]
    e = np.linalg.eigvalsh(h[np.ix_(idx, idx)])
    return np.sort(e[:2] - h[0, 0].real)


@pytest.mark.parametrize("label", ["G", "K", "M"])
def test_microscopic_converges_to_effective(label):
    target = one_magnon_band(build_model("CrBr3", label, 1), centered=False)
    dev = [np.max(np.abs(_micro_one_magnon(A, label) - target)) for A in (100.0, 200.0, 400.0)]
    assert dev[2] < dev[1] < dev[0] or dev[0] < 1e-10
    if dev[0] > 1e-10:
        # first-order in 1/A
        assert dev[0] / dev[1] == pytest.approx(2.0, rel=0.1)


def test_microscopic_size_guard():
    with pytest.raises(SizeLimit):
        assemble_microscopic(build_supercell_chain(4), material_preset("CrBr3"), high_symmetry_point("G"))


def test_trotter_estimate_quadratic_in_tau(model_factory):
    m = model_factory("G", 3)
    e1 = lie_trotter_error_estimate(m, 0.1, 19).value
    e2 = lie_trotter_error_estimate(m, 0.2, 19).value
    assert e2 / e1 == pytest.approx(4.0, rel=1e-12)


def test_trotter_estimate_zero_for_commuting_model(model_factory):
    m = model_factory("G", 3)
    zz = EffectiveRingModel.from_dict(
        {**m.to_dict(), "bonds": [dict(b, j_perp=0.0, j_cross=0.0) for b in m.to_dict()["bonds"]]}
    )
    for frag in ("pauli", "bond", "layer"):
        assert lie_trotter_error_estimate(zz, 0.1, 19, frag).value == 0.0


def test_layer_bound_dominates_exact(model_factory):
    m = model_factory("K", 3)
    exact, _ = commutator_norm_sum(m, "layer")
    bound, _ = commutator_norm_sum(m, "layer", exact_max_sites=2)
    assert exact <= bound + 1e-12
