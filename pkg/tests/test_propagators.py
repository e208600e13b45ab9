import math

import numpy as np
import pytest
import scipy.linalg as sla

from magnonring.hamiltonian import (
    EffectiveRingModel,
    RingOperator,
    sparse_hamiltonian,
    total_sz_diag,
)
from magnonring.propagators import (
    EvolutionRequest,
    MemoryBudget,
    ObservableTable,
    SectorPropagator,
    dense_evolve,
    fm_state,
    krylov_evolve,
    krylov_step,
    measure_sites,
    quench_state,
)


def _field_only(model, h):
    d = model.to_dict()
    d["bonds"] = [dict(b, j_perp=0.0, j_z=0.0, j_cross=0.0) for b in d["bonds"]]
    d["fields"] = [h] * model.n_sites
    d["alpha"] = 0.0
    return EffectiveRingModel.from_dict(d)


def _expm_table(model, psi0, times, centered=True):
    h = sparse_hamiltonian(model, centered=centered).toarray()
    rows = [measure_sites(sla.expm(-1j * h * t) @ psi0, model.n_sites) for t in times]
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])


def test_quench_state_product_values():
    psi = quench_state(6)
    sx, sy, sz = measure_sites(psi, 6)
    assert np.allclose(sz[:3], 0.5 * math.cos(0.3 * math.pi))
    assert np.allclose(sz[3:], 0.5)
    # RX(theta)|up> tilts toward -y
    assert np.allclose(sy[:3], -0.5 * math.sin(0.3 * math.pi))
    assert np.allclose(sx, 0.0)
    with pytest.raises(ValueError):
        quench_state(5)


def test_free_precession(model_factory):
    m = _field_only(model_factory("G", 1), 0.7)
    psi0 = quench_state(2)
    tab = krylov_evolve(EvolutionRequest.uniform(m, psi0, 0.3, 10, centered=False))
    sp0 = tab.splus[0]
    # <S+>(t) = <S+>(0) exp(+i h t) for H = h S^z_tot
    assert np.allclose(tab.splus, sp0[None, :] * np.exp(1j * 0.7 * tab.times)[:, None], atol=1e-9)


@pytest.mark.parametrize("label", ["G", "K", "M"])
def test_fm_state_is_stationary(label, model_factory):
    m = model_factory(label, 3)
    tab = krylov_evolve(EvolutionRequest.uniform(m, fm_state(6), 0.2, 5))
    assert np.allclose(tab.sz, 0.5) and np.allclose(tab.splus, 0.0)


@pytest.mark.parametrize("label", ["G", "K", "M"])
def test_dense_and_krylov_match_expm(label, model_factory):
    m = model_factory(label, 3)
    req = EvolutionRequest.uniform(m, quench_state(6), 0.3, 12)
    kx, ky = _expm_table(m, req.initial_state, req.times)
    for tab in (dense_evolve(req), krylov_evolve(req)):
        assert np.max(np.abs(tab.sx - kx)) < 1e-8
        assert np.max(np.abs(tab.sy - ky)) < 1e-8


def test_two_site_ring_eigenvalues(model_factory):
    m = model_factory("M", 1)
    h = sparse_hamiltonian(m).toarray()
    assert np.allclose(SectorPropagator(m).eigenvalues(), np.linalg.eigvalsh(h), atol=1e-12)
    # hand check: the FM levels sit on the diagonal, the one-flip block is 2x2
    b0, b1 = (b.couplings for b in m.bonds)
    assert h[0, 0].real == pytest.approx(0.25 * (b0.j_z + b1.j_z), abs=1e-12)
    off = 0.5 * (complex(b0.j_perp, b0.j_cross) + complex(b1.j_perp, -b1.j_cross))
    assert abs(h[2, 1]) == pytest.approx(abs(off), abs=1e-12)


def test_forward_backward_returns(model_factory, rng):
    m = model_factory("K", 3)
    op = RingOperator(m)
    psi = rng.normal(size=64) + 1j * rng.normal(size=64)
    psi /= np.linalg.norm(psi)
    fwd, _, _ = krylov_step(op, psi, 1.7)
    back, _, _ = krylov_step(op, fwd, -1.7)
    assert np.allclose(back, psi, atol=1e-12)
    prop = SectorPropagator(m)
    assert np.allclose(prop.apply(prop.apply(psi, 1.7), -1.7), psi, atol=1e-12)


@pytest.mark.parametrize("label", ["G", "M"])
def test_krylov_conservation_laws(label, model_factory):
    m = model_factory(label, 5)
    tab = krylov_evolve(EvolutionRequest.uniform(m, quench_state(10), 0.3, 19), keep_states=True)
    assert tab.stats["norm_drift"] <= 1e-10
    assert tab.stats["energy_drift"] <= 1e-8
    sz = total_sz_diag(10)
    mags = [np.vdot(s, sz * s).real for s in tab.stats["states"]]
    assert np.ptp(mags) <= 1e-8
    assert np.allclose(tab.sz.sum(axis=1), mags[0], atol=1e-8)


def test_krylov_matches_dense_at_n12(model_factory):
    m = model_factory("M", 6)
    req = EvolutionRequest.uniform(m, quench_state(12), 0.225, 19)
    a, b = krylov_evolve(req), dense_evolve(req)
    for x, y in ((a.sx, b.sx), (a.sy, b.sy), (a.sz, b.sz)):
        assert np.max(np.abs(x - y)) < 1e-8


def test_request_validation(model_factory):
    m = model_factory("G", 1)
    with pytest.raises(ValueError):
        EvolutionRequest(m, quench_state(2), np.array([0.1, 0.2]))
    with pytest.raises(ValueError):
        EvolutionRequest(m, 2 * quench_state(2), np.array([0.0, 0.2]))
    with pytest.raises(ValueError):
        EvolutionRequest(m, quench_state(4), np.array([0.0, 0.2]))


def test_memory_guards(model_factory):
    m = model_factory("G", 11)
    with pytest.raises(MemoryBudget):
        krylov_evolve(EvolutionRequest.uniform(m, fm_state(22), 0.1, 1), max_sites=20)
    with pytest.raises(Exception):
        dense_evolve(EvolutionRequest.uniform(model_factory("G", 7), fm_state(14), 0.1, 1))


def test_observable_table_csv_roundtrip(model_factory):
    m = model_factory("M", 2)
    tab = dense_evolve(EvolutionRequest.uniform(m, quench_state(4), 0.2, 4))
    back = ObservableTable.from_csv(tab.to_csv())
    assert np.array_equal(back.sx, tab.sx) and np.array_equal(back.times, tab.times)
