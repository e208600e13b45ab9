import math

import numpy as np
import pytest
from scipy import stats

from magnonring.circuits import (
    Circuit,
    Gate,
    build_trotter_circuit,
    prepare_quench,
    trotter_step_unitary,
)
from magnonring.hamiltonian import SizeLimit
from magnonring.propagators import measure_sites, quench_state
from magnonring.simulator import (
    IDEAL,
    MissingBasis,
    MissingCalibration,
    NoisePreset,
    ShotBatch,
    TrexCalibration,
    apply_noisy_circuit,
    balanced_masks,
    calibrate_trex,
    density_matrix_oracle,
    estimate_observables,
    list_noise_presets,
    noise_preset,
    pauli_error_probability,
    pauli_transfer_matrix,
    preset_for,
    run_protocol,
    run_statevector,
    sample_noisy,
    statevector_protocol,
)


def _measured(circ, basis):
    out = Circuit(circ.n_qubits, [list(m) for m in circ.moments], dict(circ.metadata))
    out.append(Gate("M" + basis, (q,)) for q in range(circ.n_qubits))
    return out


def test_empty_and_quench_statevectors():
    psi = run_statevector(Circuit(3))
    assert psi[0] == 1 and np.count_nonzero(psi) == 1
    psi = run_statevector(prepare_quench(4))
    assert np.allclose(psi, quench_state(4))
    with pytest.raises(SizeLimit):
        run_statevector(Circuit(4), max_qubits=3)


def test_protocol_matches_step_unitary_powers(model_factory):
    m = model_factory("M", 3)
    tab = statevector_protocol(m, 0.225, 6)
    u = trotter_step_unitary(m, 0.225)
    psi = quench_state(6)
    for k in range(7):
        sx, sy, sz = measure_sites(psi, 6)
        assert np.allclose(tab.sx[k], sx, atol=1e-10) and np.allclose(tab.sy[k], sy, atol=1e-10)
        psi = u @ psi


def test_noiseless_sampling_follows_born(model_factory):
    circ = build_trotter_circuit(model_factory("K", 2), 0.14, 2, basis="X")
    batch = sample_noisy(circ, IDEAL, 20000, seed=3)
    probs = density_matrix_oracle(circ).probs_true
    idx = batch.bits @ (1 << np.arange(3, -1, -1))
    counts = np.bincount(idx, minlength=16)
    keep = probs > 1e-12
    assert counts[~keep].sum() == 0
    _, p = stats.chisquare(counts[keep], probs[keep] / probs[keep].sum() * counts.sum())
    assert p > 1e-3


def test_symmetric_readout_raw_bias():
    circ = _measured(Circuit(1), "Z")
    batch = sample_noisy(circ, IDEAL.replace(eps_ro=0.02), 200000, seed=1)
    z = batch.decoded()[:, 0]
    assert abs(z.mean() - 0.96) < 4 * z.std() / math.sqrt(z.size)


def test_sampling_is_deterministic(model_factory):
    circ = build_trotter_circuit(model_factory("M", 2), 0.225, 2)
    noise = noise_preset("garnet-2026-01-21-n6-M")
    a = sample_noisy(circ, noise, 500, seed=11, trex="balanced")
    b = sample_noisy(circ, noise, 500, seed=11, trex="balanced")
    c = sample_noisy(circ, noise, 500, seed=12, trex="balanced")
    assert np.array_equal(a.bits, b.bits) and np.array_equal(a.masks, b.masks)
    assert not np.array_equal(a.bits, c.bits)


def test_symmetric_flip_correction_is_ratio():
    p = 0.05
    circ = _measured(Circuit(2), "Z")
    noise = IDEAL.replace(eps_ro=p)
    batch = sample_noisy(circ, noise, 4000, seed=0)
    raw = estimate_observables([batch], mitigate=False, require=("Z",))
    cal = TrexCalibration(np.full(2, 1 - 2 * p), np.zeros(2), 0)
    fixed = estimate_observables([batch], cal, require=("Z",))
    assert np.allclose(fixed.mean["Z"], raw.mean["Z"] / (1 - 2 * p))


def test_estimator_errors():
    batch = ShotBatch(np.zeros((4, 2)), "X", np.zeros(2))
    with pytest.raises(MissingBasis):
        estimate_observables([batch], mitigate=False)
    with pytest.raises(MissingCalibration):
        estimate_observables([batch], None, mitigate=True, require=("X",))


def test_balanced_masks_pairs(rng):
    m = balanced_masks(10, 3, rng)
    assert np.array_equal(m[0::2], 1 - m[1::2])
    assert np.array_equal(m.mean(axis=0), np.full(3, 0.5))


def test_trex_calibration_factors():
    cal = calibrate_trex(3, IDEAL.replace(p01=0.01, p10=0.05), shots=40000, seed=2)
    expected = 1 - 0.01 - 0.05
    assert np.all(np.abs(cal.factors - expected) < 4 * cal.factor_se)


def test_oracle_noiseless_matches_statevector(model_factory):
    circ = build_trotter_circuit(model_factory("G", 2), 0.11, 3)
    psi = run_statevector(circ)
    rho = density_matrix_oracle(circ).rho
    assert np.allclose(rho, np.outer(psi, psi.conj()), atol=1e-12)


def test_oracle_single_qubit_depolarizing():
    eps = 0.01
    circ = Circuit(1)
    circ.append([Gate("RZ", (0,), (0.0,))])
    circ.append([Gate("MZ", (0,))])
    res = density_matrix_oracle(circ, IDEAL.replace(eps_1q=eps))
    p = pauli_error_probability(eps, 1)
    # X and Y errors flip Z: <Z> = 1 - 2 (2p/3) = 1 - 2 eps under the fixed convention
    assert res.ideal_mean[0] == pytest.approx(1 - 4 * p / 3)
    assert res.ideal_mean[0] == pytest.approx(1 - 2 * eps)


def test_depolarizing_convention_fidelity():
    # average gate fidelity of the one- and two-qubit channels equals 1 - eps
    for k, eps in ((1, 0.003), (2, 0.02)):
        p = pauli_error_probability(eps, k)
        d = 2**k
        f_pro = 1 - p
        assert (d * f_pro + 1) / (d + 1) == pytest.approx(1 - eps)


def test_ptm_of_depolarizing_is_diagonal():
    noise = IDEAL.replace(eps_2q=0.02)
    circ = Circuit(2)
    circ.append([Gate("CZ", (0, 1))])
    from magnonring.twoqubit import CZ

    r = pauli_transfer_matrix(lambda rho: CZ @ apply_noisy_circuit(circ, rho, noise) @ CZ)
    assert np.allclose(r, np.diag(np.diag(r)), atol=1e-14)
    p = noise.p_2q
    assert r[0, 0] == pytest.approx(1.0)
    assert np.allclose(np.diag(r)[1:], 1 - 16 * p / 15)


def test_shot_batch_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    b = ShotBatch(rng.integers(0, 2, (37, 11)), "Y", rng.integers(0, 2, (37, 11)), 5, 9, 3, 1,
                  meta={"noise": "x"})
    b.save(tmp_path / "cell")
    back = ShotBatch.load(tmp_path / "cell")
    assert np.array_equal(back.bits, b.bits) and np.array_equal(back.masks, b.masks)
    assert (back.basis, back.twirl_seed, back.time_index, back.instance) == ("Y", 5, 3, 1)
    assert back.timestamp is None


def test_presets():
    names = list_noise_presets()
    assert "emerald-2026-01-26-n18-M" in names
    p = preset_for(18, "M")
    assert (p.eps_2q, p.eps_ro) == (0.0037, 0.017)
    assert noise_preset("garnet-2026-01-21").eps_2q == 0.0053
    with pytest.raises(ValueError):
        noise_preset("garnet-2026-01-22")  # three rows with different numbers
    with pytest.raises(ValueError):
        noise_preset("unknown")
    with pytest.raises(ValueError):
        NoisePreset(eps_2q=1.5)
    with pytest.raises(ValueError):
        NoisePreset(T1=10.0, T2=25.0, decoherence=True)
    d = p.to_dict()
    assert "convention" in d


def test_decoherence_channel_on_idle_is_off_by_default():
    assert IDEAL.decoherence_paulis(100.0) == (0.0, 0.0, 0.0)
    p = noise_preset("emerald-2026-01-26-n18-M", decoherence=True)
    px, py, pz = p.decoherence_paulis(60.0)
    assert px == py > 0 and pz > 0


def test_run_protocol_noiseless_small(model_factory):
    m = model_factory("M", 2)
    ref = statevector_protocol(m, 0.225, 3)
    res = run_protocol(m, 0.225, 3, IDEAL, twirls=4, shots=256, seed=1, shots_per_trajectory=64)
    assert res.executions == 2 * 4 * 4 and res.shots_per_execution == 256
    assert len(res.batches) == res.executions
    zx = (res.sx - ref.sx) / np.maximum(res.sx_se, 1e-12)
    zy = (res.sy - ref.sy) / np.maximum(res.sy_se, 1e-12)
    assert np.max(np.abs(zx)) < 4.5 and np.max(np.abs(zy)) < 4.5
    again = run_protocol(m, 0.225, 3, IDEAL, twirls=4, shots=256, seed=1, shots_per_trajectory=64)
    assert np.array_equal(res.sx, again.sx)


def test_run_protocol_trex_masks_pair_up(model_factory):
    m = model_factory("G", 2)
    res = run_protocol(m, 0.117, 1, IDEAL.replace(eps_ro=0.02), twirls=4, shots=64,
                       shots_per_trajectory=32, calibration_shots=256)
    for k in range(2):
        for b in "XY":
            m0 = res.batches[(k, b, 0)].masks[0]
            m1 = res.batches[(k, b, 1)].masks[0]
            assert np.array_equal(m0, 1 - m1)
