"""Statevector and noisy shot simulation, TREX estimation and a density-matrix oracle.

Noise convention (fixed): a calibrated average gate infidelity ``eps`` on a
k-qubit gate becomes a Pauli channel that applies one of the D^2 - 1
non-identity Paulis uniformly with total probability

    p_pauli = eps * (D + 1) / D,   D = 2**k

(1.5 eps for single-qubit gates, 1.25 eps for CZ). Readout flips each
recorded bit with probability eps_ro (or p01 / p10 when given). TREX flips
are applied in the measurement frame immediately before readout.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import kernels
from .circuits import CZ, Circuit, Gate, _moment_kind
from .hamiltonian import SizeLimit
from .twoqubit import H, I2, X, Y, Z

DEPOLARIZING_CONVENTION = "p_pauli = eps * (D + 1) / D with D = 2**k (uniform non-identity Paulis)"
PAULI_1Q = (X, Y, Z)
_PAULI_ALL = (I2, X, Y, Z)
PAULI_2Q = tuple(
    np.kron(_PAULI_ALL[a], _PAULI_ALL[b]) for a in range(4) for b in range(4) if (a, b) != (0, 0)
)
_S_DAG = np.diag([1.0, -1j])
BASIS_ROTATION = {"X": H, "Y": H @ _S_DAG, "Z": I2}


class MissingBasis(KeyError):
    pass


class MissingCalibration(ValueError):
    pass


def pauli_error_probability(eps: float, n_qubits: int) -> float:
    d = 2**n_qubits
    return eps * (d + 1) / d


# --------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class NoisePreset:
    name: str = "ideal"
    eps_1q: float = 0.0
    eps_2q: float = 0.0
    eps_ro: float = 0.0
    t_1q: float = 0.0  # ns
    t_2q: float = 0.0
    t_ro: float = 0.0
    T1: float = math.inf  # us
    T2: float = math.inf
    decoherence: bool = False
    p01: float | None = None  # P(read 1 | 0)
    p10: float | None = None  # P(read 0 | 1)
    cz_overrotation: float = 0.0  # extra exp(-i theta ZZ / 2) after every CZ
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        for k in ("eps_1q", "eps_2q", "eps_ro"):
            v = getattr(self, k)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{k}={v} outside [0, 1]")
        for k in ("p01", "p10"):
            v = getattr(self, k)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{k}={v} outside [0, 1]")
        if self.p_1q > 1 or self.p_2q > 1:
            raise ValueError("gate error too large for the depolarizing conversion")
        if self.decoherence and self.T2 > 2 * self.T1:
            raise ValueError("T2 must not exceed 2 T1")

    @property
    def p_1q(self):
        return pauli_error_probability(self.eps_1q, 1)

    @property
    def p_2q(self):
        return pauli_error_probability(self.eps_2q, 2)

    @property
    def readout(self):
        p01 = self.eps_ro if self.p01 is None else self.p01
        p10 = self.eps_ro if self.p10 is None else self.p10
        return p01, p10

    def decoherence_paulis(self, duration_ns):
        """(px, py, pz) of the Pauli-twirled amplitude/phase damping over a duration."""
        if not self.decoherence or duration_ns <= 0:
            return (0.0, 0.0, 0.0)
        t_us = duration_ns * 1e-3
        px = py = (1.0 - math.exp(-t_us / self.T1)) / 4.0
        pz = (1.0 - math.exp(-t_us / self.T2)) / 2.0 - px
        return (px, py, max(pz, 0.0))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        d = dataclasses.asdict(self)
        for k in ("T1", "T2"):
            if math.isinf(d[k]):
                d[k] = None
        d["convention"] = DEPOLARIZING_CONVENTION
        return d


IDEAL = NoisePreset()


def _preset_rows():
    text = resources.files("magnonring").joinpath("data/noise_presets.json").read_text()
    return json.loads(text)["presets"]


def list_noise_presets():
    return [r["name"] for r in _preset_rows()]


def _from_row(r):
    return NoisePreset(
        r["name"], r["eps_1q"], r["eps_2q"], r["eps_ro"], r["t_1q_ns"], r["t_2q_ns"],
        r["t_ro_ns"], r["T1_us"], r["T2_us"],
        meta={"qpu": r["qpu"], "n_sites": r["n_sites"], "q_label": r["q_label"], "date": r["date"]},
    )


def noise_preset(name: str, **overrides) -> NoisePreset:
    """Bundled preset by full name, or by a unique prefix such as 'garnet-2026-01-21'."""
    if name in ("ideal", "none", "noiseless"):
        return IDEAL.replace(**overrides) if overrides else IDEAL
    rows = _preset_rows()
    exact = [r for r in rows if r["name"] == name]
    hits = exact or [r for r in rows if r["name"].startswith(name)]
    if not hits:
        raise ValueError(f"unknown noise preset {name!r}")
    distinct = {json.dumps({k: v for k, v in r.items() if k not in ("name", "n_sites", "q_label")},
                           sort_keys=True) for r in hits}
    if len(distinct) > 1:
        raise ValueError(f"noise preset {name!r} is ambiguous: {[r['name'] for r in hits]}")
    p = _from_row(hits[0])
    return p.replace(**overrides) if overrides else p


def preset_for(n_sites: int, q_label: str, **overrides) -> NoisePreset:
    from .lattice import canonical_label

    q = canonical_label(q_label)
    for r in _preset_rows():
        if r["n_sites"] == n_sites and r["q_label"] == q:
            p = _from_row(r)
            return p.replace(**overrides) if overrides else p
    raise ValueError(f"no calibration row for N={n_sites}, q={q}")


# --------------------------------------------------------------------------
# fused execution program


def _overrotated_cz(theta):
    if theta == 0.0:
        return CZ
    zz = np.array([1, -1, -1, 1], dtype=float)
    return np.diag(np.exp(-0.5j * theta * zz)) @ CZ


@dataclass(eq=False)
class _Block:
    qubits: tuple
    ops: list = field(default_factory=list)  # local matrices in time order
    slots: list = field(default_factory=list)  # per op: list of global slot ids
    matrix: np.ndarray | None = None

    def local_dim(self):
        return 1 << len(self.qubits)


@dataclass
class _Slot:
    probs: np.ndarray  # cumulative thresholds over the listed Paulis
    paulis: tuple  # local matrices in block basis
    total: float


class Program:
    """Gate list fused into <= 2-qubit blocks with Pauli-error slots after every gate.

    Blocks never straddle a checkpoint, so the state at each checkpoint is the
    state after the preceding moments.
    """

    def __init__(self, circuit: Circuit, noise: NoisePreset = IDEAL):
        self.n = circuit.n_qubits
        self.noise = noise
        self.items = []  # _Block or ("check", index)
        self.slots: list[_Slot] = []
        self.measure_basis = circuit.measurement_basis()
        self.trex_mask = None
        open_ = [None] * self.n
        cz = _overrotated_cz(noise.cz_overrotation)
        p1, p2 = noise.p_1q, noise.p_2q
        deco1 = noise.decoherence_paulis(noise.t_1q)
        deco2 = noise.decoherence_paulis(noise.t_2q)
        n_check = 0
        for moment in circuit.moments:
            kind = _moment_kind(moment)
            if kind == "check":
                self.items.append(("check", n_check))
                n_check += 1
                open_ = [None] * self.n
                continue
            if kind == "measure":
                continue
            if kind == "flip":
                self.trex_mask = tuple(1 if any(g.qubits[0] == q for g in moment) else 0
                                       for q in range(self.n))
                continue
            for g in moment:
                if g.kind == "CZ":
                    i, j = g.qubits
                    blk = open_[i]
                    if not (blk is not None and blk is open_[j] and len(blk.qubits) == 2):
                        blk = _Block((i, j))
                        for q in (i, j):
                            old = open_[q]
                            if old is not None and len(old.qubits) == 1:
                                self._absorb(blk, old)
                        self.items.append(blk)
                        open_[i] = open_[j] = blk
                    ids = []
                    if p2 > 0:
                        ids.append(self._new_slot([p2 / 15] * 15, self._embed2(blk, (i, j))))
                    for q in (i, j):
                        if any(deco2):
                            ids.append(self._new_slot(deco2, self._embed1(blk, q)))
                    blk.ops.append(cz)
                    blk.slots.append(ids)
                else:
                    q = g.qubits[0]
                    blk = open_[q]
                    if blk is None:
                        blk = _Block((q,))
                        self.items.append(blk)
                        open_[q] = blk
                    ids = []
                    if p1 > 0:
                        ids.append(self._new_slot([p1 / 3] * 3, self._embed1(blk, q)))
                    if any(deco1):
                        ids.append(self._new_slot(deco1, self._embed1(blk, q)))
                    blk.ops.append(self._lift(blk, q, g.matrix()))
                    blk.slots.append(ids)
        self.n_checkpoints = n_check
        for it in self.items:
            if isinstance(it, _Block):
                it.matrix = self._product(it, {})
        self._thresholds = np.array([s.total for s in self.slots])

    # block helpers
    def _lift(self, blk, q, m):
        if len(blk.qubits) == 1:
            return m
        return np.kron(m, I2) if blk.qubits[0] == q else np.kron(I2, m)

    def _embed1(self, blk, q):
        return tuple(self._lift(blk, q, p) for p in PAULI_1Q)

    def _embed2(self, blk, pair):
        # the uniform 15-Pauli set is invariant under swapping the two qubits
        return PAULI_2Q

    def _absorb(self, blk, old):
        q = old.qubits[0]
        for m, ids in zip(old.ops, old.slots):
            blk.ops.append(self._lift(blk, q, m))
            blk.slots.append(ids)
            for sid in ids:
                s = self.slots[sid]
                self.slots[sid] = _Slot(s.probs, tuple(self._lift(blk, q, p) for p in s.paulis), s.total)
        self.items = [it for it in self.items if it is not old]

    def _new_slot(self, probs, paulis):
        probs = np.asarray(probs, dtype=float)
        self.slots.append(_Slot(np.cumsum(probs), tuple(paulis), float(probs.sum())))
        return len(self.slots) - 1

    def _product(self, blk, errors):
        m = np.eye(blk.local_dim(), dtype=complex)
        for op, ids in zip(blk.ops, blk.slots):
            m = op @ m
            for sid in ids:
                e = errors.get(sid)
                if e is not None:
                    m = self.slots[sid].paulis[e] @ m
        return m

    # execution
    def draw_errors(self, rng):
        """One error realization: tuple of (slot, Pauli index) in slot order."""
        if not self.slots:
            return ()
        u = rng.random(self._thresholds.size)
        hits = np.flatnonzero(u < self._thresholds)
        # which Pauli: position of u within the slot's cumulative thresholds
        return tuple((int(c), int(np.searchsorted(self.slots[c].probs, u[c], side="right"))) for c in hits)

    def run(self, pattern=(), psi=None, on_check=None):
        n = self.n
        if psi is None:
            psi = np.zeros(1 << n, dtype=complex)
            psi[0] = 1.0
        errors = dict(pattern)
        err_slots = set(errors)
        for it in self.items:
            if isinstance(it, tuple):
                if on_check is not None:
                    on_check(it[1], psi)
                continue
            if err_slots and any(s in err_slots for ids in it.slots for s in ids):
                m = self._product(it, errors)
            else:
                m = it.matrix
            if len(it.qubits) == 1:
                kernels.apply_1q(psi, n, it.qubits[0], m)
            else:
                kernels.apply_2q(psi, n, it.qubits[0], it.qubits[1], m)
        return psi


# --------------------------------------------------------------------------
# statevector


def run_statevector(circuit: Circuit, max_qubits: int = 24) -> np.ndarray:
    """Exact noiseless amplitudes before measurement (TREX flips act on recorded bits)."""
    if circuit.n_qubits > max_qubits:
        raise SizeLimit(f"{circuit.n_qubits} qubits exceeds the statevector limit {max_qubits}")
    return Program(circuit).run()


def rotate_to_basis(psi, n, basis):
    out = np.array(psi, dtype=complex, copy=True)
    if basis != "Z":
        r = BASIS_ROTATION[basis]
        for q in range(n):
            kernels.apply_1q(out, n, q, r)
    return out


def pauli_expectations(psi, n, basis):
    """Per-qubit <P> for P in {X, Y, Z}."""
    _, sz = kernels.site_expectations(np.ascontiguousarray(rotate_to_basis(psi, n, basis)), n)
    return 2.0 * np.asarray(sz)


def _index_bits(idx, n):
    return ((idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1).astype(np.uint8)


def basis_cdf(psi, n, basis):
    return np.cumsum(np.abs(rotate_to_basis(psi, n, basis)) ** 2)


def sample_from_cdf(cdf, n, shots, rng):
    idx = np.searchsorted(cdf, rng.random(shots) * cdf[-1], side="right")
    return _index_bits(np.minimum(idx, cdf.size - 1), n)


def sample_bits(psi, n, basis, shots, rng):
    """Ideal measurement of shots bitstrings in the given basis."""
    return sample_from_cdf(basis_cdf(psi, n, basis), n, shots, rng)


def apply_readout(bits, masks, noise: NoisePreset, rng):
    """Bits seen by the detector: TREX flip in the measurement frame, then readout error."""
    b = bits ^ masks
    p01, p10 = noise.readout
    if p01 or p10:
        u = rng.random(b.shape)
        flip = np.where(b == 0, u < p01, u < p10)
        b = b ^ flip.astype(np.uint8)
    return b


# --------------------------------------------------------------------------
# shot batches


@dataclass
class ShotBatch:
    bits: np.ndarray  # (shots, n) uint8, as recorded
    basis: str
    masks: np.ndarray  # (shots, n) uint8 TREX flips applied before readout
    twirl_seed: int | None = None
    seed: int | None = None
    time_index: int | None = None
    instance: int | None = None
    timestamp: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        m = np.asarray(self.masks, dtype=np.uint8)
        if m.ndim == 1:
            m = np.broadcast_to(m, self.bits.shape).copy()
        self.masks = m
        if self.masks.shape != self.bits.shape:
            raise ValueError("mask array must match the bit array")

    @property
    def shots(self):
        return self.bits.shape[0]

    @property
    def n_qubits(self):
        return self.bits.shape[1]

    def decoded(self):
        """+/-1 eigenvalues of the measured Pauli with TREX flips undone."""
        return 1.0 - 2.0 * (self.bits ^ self.masks)

    def sidecar(self):
        return {
            "format": "magnonring-shots v1",
            "shots": self.shots,
            "n_qubits": self.n_qubits,
            "basis": self.basis,
            "twirl_seed": self.twirl_seed,
            "seed": self.seed,
            "time_index": self.time_index,
            "instance": self.instance,
            "timestamp": self.timestamp,
            "bit_order": "row-major (shot, qubit), numpy packbits big-endian per row",
            "meta": self.meta,
        }

    def save(self, prefix):
        prefix = str(prefix)
        with open(prefix + ".bits", "wb") as fh:
            fh.write(np.packbits(self.bits, axis=1).tobytes())
            fh.write(np.packbits(self.masks, axis=1).tobytes())
        with open(prefix + ".json", "w") as fh:
            json.dump(self.sidecar(), fh, indent=1, sort_keys=True)
        return prefix

    @classmethod
    def load(cls, prefix):
        prefix = str(prefix)
        with open(prefix + ".json") as fh:
            side = json.load(fh)
        shots, n = side["shots"], side["n_qubits"]
        row = (n + 7) // 8
        raw = np.frombuffer(open(prefix + ".bits", "rb").read(), dtype=np.uint8)
        if raw.size != 2 * shots * row:
            raise ValueError("bit file size does not match its sidecar")
        bits = np.unpackbits(raw[: shots * row].reshape(shots, row), axis=1)[:, :n]
        masks = np.unpackbits(raw[shots * row:].reshape(shots, row), axis=1)[:, :n]
        return cls(bits, side["basis"], masks, side["twirl_seed"], side["seed"],
                   side["time_index"], side["instance"], side["timestamp"], side.get("meta", {}))


def _rng(seed, *stream):
    return np.random.default_rng([int(seed), *[int(s) for s in stream]])


class _OutcomeCache:
    """Measurement-basis distributions keyed by error pattern; small registers keep every pattern."""

    def __init__(self, prog, basis, limit_bytes=64 << 20):
        self.prog = prog
        self.basis = basis
        self.keep_all = (8 << prog.n) * 64 <= limit_bytes
        self.store = {}

    def __call__(self, pattern):
        cdf = self.store.get(pattern)
        if cdf is None:
            cdf = basis_cdf(self.prog.run(pattern), self.prog.n, self.basis)
            if self.keep_all or not pattern:
                self.store[pattern] = cdf
        return cdf


def balanced_masks(shots, n, rng):
    """Per-shot TREX masks in complementary pairs (m, 1 - m), so every bit is flipped half the time."""
    half = (shots + 1) // 2
    m = rng.integers(0, 2, (half, n), dtype=np.uint8)
    out = np.empty((2 * half, n), dtype=np.uint8)
    out[0::2] = m
    out[1::2] = 1 - m
    return out[:shots]


def sample_noisy(circuit: Circuit, noise: NoisePreset, shots: int, seed, shots_per_trajectory: int = 1,
                 max_qubits: int = 24, trex: str | None = None) -> ShotBatch:
    """Monte-Carlo trajectories of the Pauli noise model.

    Trajectory i draws its error realization, its shots and its readout flips
    from a generator seeded by (seed, i). ``trex="balanced"`` replaces the
    circuit's fixed flip mask by complementary per-shot masks.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if circuit.n_qubits > max_qubits:
        raise SizeLimit(f"{circuit.n_qubits} qubits exceeds the simulator limit {max_qubits}")
    basis = circuit.measurement_basis() or "Z"
    prog = Program(circuit, noise)
    n = circuit.n_qubits
    fixed = np.array(prog.trex_mask or (0,) * n, dtype=np.uint8)
    outcome = _OutcomeCache(prog, basis)
    n_traj = -(-shots // shots_per_trajectory)
    bits = np.empty((shots, n), dtype=np.uint8)
    masks = np.empty_like(bits)
    for i in range(n_traj):
        rng = _rng(seed, i)
        lo = i * shots_per_trajectory
        hi = min(shots, lo + shots_per_trajectory)
        raw = sample_from_cdf(outcome(prog.draw_errors(rng)), n, hi - lo, rng)
        mk = balanced_masks(hi - lo, n, rng) if trex == "balanced" else np.broadcast_to(fixed, raw.shape)
        bits[lo:hi] = apply_readout(raw, mk, noise, rng)
        masks[lo:hi] = mk
    return ShotBatch(bits, basis, masks, circuit.metadata.get("twirl_seed"), int(seed),
                     meta={"noise": noise.name, "trajectories": n_traj,
                           "shots_per_trajectory": shots_per_trajectory, "trex": trex or "fixed"})


# --------------------------------------------------------------------------
# TREX calibration and estimation


@dataclass
class TrexCalibration:
    factors: np.ndarray
    factor_se: np.ndarray
    shots: int

    def to_dict(self):
        return {"factors": self.factors.tolist(), "factor_se": self.factor_se.tolist(), "shots": self.shots}


def _calibration_circuit(n, excited):
    circ = Circuit(n)
    if excited:
        circ.append(Gate("RX", (q,), (math.pi,)) for q in range(n))
    circ.append(Gate("MZ", (q,)) for q in range(n))
    return circ


def calibrate_trex(n, noise: NoisePreset, shots: int = 4096, seed=0) -> TrexCalibration:
    """Symmetrization factors from all-|0> and all-|1> preparations with balanced flip masks."""
    means, variances = [], []
    for excited in (0, 1):
        batch = sample_noisy(_calibration_circuit(n, excited), noise, shots, _calibration_seed(seed, excited),
                             trex="balanced")
        dec = batch.decoded()
        means.append(dec.mean(axis=0))
        variances.append(dec.var(axis=0, ddof=1) / dec.shape[0])
    factors = 0.5 * (means[0] - means[1])
    se = 0.5 * np.sqrt(variances[0] + variances[1])
    if np.any(factors <= 0):
        raise ValueError("readout too noisy: non-positive symmetrization factor")
    return TrexCalibration(np.minimum(factors, 1.0), se, shots)


def _calibration_seed(seed, excited):
    return int(np.random.SeedSequence([int(seed), 7, excited]).generate_state(1)[0])


@dataclass
class ObservableEstimate:
    mean: dict  # basis -> per-qubit <P>
    se: dict
    shots: dict

    def spin(self, basis):
        """<S^P> = <P>/2 with standard error."""
        return 0.5 * self.mean[basis], 0.5 * self.se[basis]


def estimate_observables(batches, calibration: TrexCalibration | None = None, mitigate=True,
                         require=("X", "Y")) -> ObservableEstimate:
    """Pool shots per basis, undo TREX flips, divide by the symmetrization factors."""
    by_basis = {}
    for b in batches:
        by_basis.setdefault(b.basis, []).append(b.decoded())
    missing = [b for b in require if b not in by_basis]
    if missing:
        raise MissingBasis(f"no batches for basis {missing}")
    if mitigate and calibration is None:
        raise MissingCalibration("TREX mitigation requested without calibration batches")
    mean, se, shots = {}, {}, {}
    for basis, arrs in by_basis.items():
        d = np.concatenate(arrs)
        m = d.mean(axis=0)
        s = d.std(axis=0, ddof=1) / math.sqrt(d.shape[0]) if d.shape[0] > 1 else np.zeros(d.shape[1])
        if mitigate:
            f, fse = calibration.factors, calibration.factor_se
            # delta method for a ratio of independent estimates
            s = np.sqrt((s / f) ** 2 + (m * fse / f**2) ** 2)
            m = m / f
        mean[basis], se[basis], shots[basis] = m, s, d.shape[0]
    return ObservableEstimate(mean, se, shots)


# --------------------------------------------------------------------------
# density-matrix oracle


def _embed_full(m, qubits, n):
    """Dense 2^n operator of a 1- or 2-qubit matrix on the given qubits."""
    if len(qubits) == 1:
        q = qubits[0]
        return np.kron(np.kron(np.eye(1 << q), m), np.eye(1 << (n - 1 - q)))
    from .hamiltonian import embed_two_site

    return embed_two_site(m, qubits[0], qubits[1], n)


def _pauli_channel(rho, paulis, probs):
    out = (1.0 - sum(probs)) * rho
    for p, pr in zip(paulis, probs):
        if pr:
            out = out + pr * (p @ rho @ p.conj().T)
    return out


def apply_noisy_circuit(circuit: Circuit, rho, noise: NoisePreset = IDEAL, max_qubits=6):
    """Exact channel evolution of a density matrix through the unitary part of circuit."""
    n = circuit.n_qubits
    if n > max_qubits:
        raise SizeLimit(f"density-matrix oracle limited to {max_qubits} qubits")
    cz = _overrotated_cz(noise.cz_overrotation)
    p1, p2 = noise.p_1q, noise.p_2q
    deco1 = noise.decoherence_paulis(noise.t_1q)
    deco2 = noise.decoherence_paulis(noise.t_2q)
    for moment in circuit.moments:
        kind = _moment_kind(moment)
        if kind in ("measure", "flip", "check"):
            continue
        for g in moment:
            if g.kind == "CZ":
                u = _embed_full(cz, g.qubits, n)
                rho = u @ rho @ u.conj().T
                if p2:
                    ps = [_embed_full(p, g.qubits, n) for p in PAULI_2Q]
                    rho = _pauli_channel(rho, ps, [p2 / 15] * 15)
                if any(deco2):
                    for q in g.qubits:
                        ps = [_embed_full(p, (q,), n) for p in PAULI_1Q]
                        rho = _pauli_channel(rho, ps, deco2)
            else:
                u = _embed_full(g.matrix(), g.qubits, n)
                rho = u @ rho @ u.conj().T
                ps = [_embed_full(p, g.qubits, n) for p in PAULI_1Q]
                if p1:
                    rho = _pauli_channel(rho, ps, [p1 / 3] * 3)
                if any(deco1):
                    rho = _pauli_channel(rho, ps, deco1)
    return rho


@dataclass
class OracleResult:
    basis: str
    probs_true: np.ndarray  # ideal-readout distribution in the measurement basis
    probs_recorded: np.ndarray  # distribution of recorded bitstrings
    decoded_mean: np.ndarray  # E[(-1)^(recorded xor mask)] per qubit
    decoded_pairs: dict  # (i, j) -> E[s_i s_j] of decoded values
    ideal_mean: np.ndarray  # per-qubit <P> before readout
    rho: np.ndarray


def density_matrix_oracle(circuit: Circuit, noise: NoisePreset = IDEAL, max_qubits=6) -> OracleResult:
    n = circuit.n_qubits
    if n > max_qubits:
        raise SizeLimit(f"density-matrix oracle limited to {max_qubits} qubits")
    dim = 1 << n
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    rho = apply_noisy_circuit(circuit, rho, noise, max_qubits)
    basis = circuit.measurement_basis() or "Z"
    r = BASIS_ROTATION[basis]
    full = r
    for _ in range(n - 1):
        full = np.kron(full, r)
    probs = np.real(np.diag(full @ rho @ full.conj().T)).clip(min=0)
    mask = np.array(Program(circuit).trex_mask or (0,) * n, dtype=np.uint8)
    idx = np.arange(dim)
    bits = _index_bits(idx, n)
    # flip in the measurement frame, then readout confusion per qubit
    p01, p10 = noise.readout
    conf = np.array([[1 - p01, p10], [p01, 1 - p10]])  # conf[recorded, seen]
    seen = bits ^ mask
    rec_probs = np.zeros(dim)
    trans = np.ones((dim, dim))
    for q in range(n):
        trans *= conf[bits[:, q][:, None], seen[:, q][None, :]]
    rec_probs = trans @ probs
    decoded = 1.0 - 2.0 * (bits ^ mask)  # decoded value of each recorded bitstring
    dmean = rec_probs @ decoded
    pairs = {}
    for i in range(n):
        for j in range(i + 1, n):
            pairs[(i, j)] = float(rec_probs @ (decoded[:, i] * decoded[:, j]))
    ideal = probs @ (1.0 - 2.0 * bits)
    return OracleResult(basis, probs, rec_probs, dmean, pairs, ideal, rho)


def pauli_transfer_matrix(channel, n_qubits=2):
    """R_ij = tr(P_i channel(P_j)) / D over the n-qubit Pauli basis."""
    labels = [()]
    for _ in range(n_qubits):
        labels = [l + (k,) for l in labels for k in range(4)]
    mats = []
    for lab in labels:
        m = np.ones((1, 1))
        for k in lab:
            m = np.kron(m, _PAULI_ALL[k])
        mats.append(m)
    d = 2**n_qubits
    r = np.zeros((len(mats), len(mats)))
    for j, pj in enumerate(mats):
        out = channel(pj.astype(complex))
        for i, pi in enumerate(mats):
            r[i, j] = np.real(np.trace(pi @ out)) / d
    return r


# --------------------------------------------------------------------------
# protocol runner: quench -> Trotter -> X/Y measurements at every step


@dataclass
class ProtocolResult:
    times: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    sx_se: np.ndarray
    sy_se: np.ndarray
    batches: dict  # (time_index, basis, instance) -> ShotBatch
    calibration: TrexCalibration | None
    executions: int
    shots_per_execution: int
    wall_time: float
    meta: dict = field(default_factory=dict)

    def splus(self):
        return self.sx + 1j * self.sy


def build_checkpointed_circuit(model, tau, n_steps, quench_angle=0.3 * math.pi):
    """One long Trotter circuit with a checkpoint after the quench and after every step."""
    from .circuits import build_trotter_circuit, prepare_quench

    n = model.n_sites
    circ = Circuit(n)
    circ.extend(prepare_quench(n, quench_angle))
    circ.moments.append([Gate("CHECK", (0,))])
    cache = {}
    for _ in range(n_steps):
        step = build_trotter_circuit(model, tau, 1, quench=Circuit(n), basis=None, _cache=cache)
        circ.extend(step)
        circ.moments.append([Gate("CHECK", (0,))])
        meta = step.metadata
    circ.metadata = dict(meta) if n_steps else {}
    circ.metadata.update({"n_trotter_steps": n_steps, "checkpoints": n_steps + 1,
                          "quench_angle": float(quench_angle)})
    return circ


def statevector_protocol(model, tau, n_steps, quench_angle=0.3 * math.pi):
    """Exact noiseless expectation values of the compiled circuit at every step."""
    from .propagators import ObservableTable, measure_sites

    t0 = time.perf_counter()
    circ = build_checkpointed_circuit(model, tau, n_steps, quench_angle)
    prog = Program(circ)
    n = model.n_sites
    rows = []
    prog.run(on_check=lambda k, psi: rows.append(measure_sites(psi, n)))
    sx, sy, sz = (np.array([r[c] for r in rows]) for c in range(3))
    return ObservableTable(tau * np.arange(n_steps + 1), sx, sy, sz, "statevector",
                           time.perf_counter() - t0, {"cz_per_step": circ.metadata.get("cz_per_step")})


def run_protocol(
    model,
    tau,
    n_steps: int = 19,
    noise: NoisePreset = IDEAL,
    twirls: int = 16,
    shots: int = 512,
    seed: int = 0,
    shots_per_trajectory: int = 128,
    quench_angle: float = 0.3 * math.pi,
    calibration_shots: int = 4096,
    bases=("X", "Y"),
    mitigate: bool = True,
    keep_batches: bool = True,
    max_qubits: int = 24,
) -> ProtocolResult:
    """Twirled, TREX-instrumented noisy sampling of every time point and basis.

    Each twirl instance is one long circuit; its checkpoints stand in for the
    per-time-point circuits, and each trajectory contributes
    shots_per_trajectory shots to every (time, basis) cell of its instance.
    """
    from .circuits import pauli_twirl

    t0 = time.perf_counter()
    n = model.n_sites
    if n > max_qubits:
        raise SizeLimit(f"{n} qubits exceeds the simulator limit {max_qubits}")
    if shots % shots_per_trajectory:
        raise ValueError("shots must be a multiple of shots_per_trajectory")
    base = build_checkpointed_circuit(model, tau, n_steps, quench_angle)
    n_traj = shots // shots_per_trajectory
    n_times = n_steps + 1
    cells = {}
    mask_rng = _rng(seed, 3)
    masks = {}
    for k in range(n_times):
        for b in bases:
            for i in range(0, twirls, 2):
                m = mask_rng.integers(0, 2, n).astype(np.uint8)
                masks[(k, b, i)] = m
                if i + 1 < twirls:
                    masks[(k, b, i + 1)] = 1 - m  # complementary pair: exact symmetrization
    for inst in range(twirls):
        twirl_seed = int(_rng(seed, 1, inst).integers(2**31))
        prog = Program(pauli_twirl(base, twirl_seed), noise)
        for traj in range(n_traj):
            rng = _rng(seed, 2, inst, traj)

            def on_check(k, psi):
                for b in bases:
                    cells.setdefault((k, b, inst), []).append(sample_bits(psi, n, b, shots_per_trajectory, rng))

            prog.run(prog.draw_errors(rng), on_check=on_check)
        for k in range(n_times):
            for bi, b in enumerate(bases):
                bits = np.concatenate(cells.pop((k, b, inst)))
                mk = np.broadcast_to(masks[(k, b, inst)], bits.shape)
                rec = apply_readout(bits, mk, noise, _rng(seed, 4, inst, k, bi))
                cells[("done", k, b, inst)] = ShotBatch(rec, b, mk, twirl_seed, int(seed), k, inst)
    t_sample = time.perf_counter() - t0
    calibration = calibrate_trex(n, noise, calibration_shots, seed) if mitigate else None
    sx = np.zeros((n_times, n))
    sy = np.zeros_like(sx)
    sxe = np.zeros_like(sx)
    sye = np.zeros_like(sx)
    batches = {}
    for k in range(n_times):
        group = [cells[("done", k, b, i)] for b in bases for i in range(twirls)]
        est = estimate_observables(group, calibration, mitigate=mitigate, require=bases)
        sx[k], sxe[k] = est.spin("X")
        sy[k], sye[k] = est.spin("Y")
        if keep_batches:
            for bt in group:
                batches[(k, bt.basis, bt.instance)] = bt
    return ProtocolResult(
        tau * np.arange(n_times), sx, sy, sxe, sye, batches, calibration,
        executions=len(bases) * n_times * twirls, shots_per_execution=shots,
        wall_time=time.perf_counter() - t0,
        meta={"noise": noise.to_dict(), "twirls": twirls, "shots": shots,
              "shots_per_trajectory": shots_per_trajectory, "seed": seed,
              "cz_per_step": base.metadata.get("cz_per_step"), "bases": list(bases),
              "mitigated": mitigate,
              "stage_seconds": {"sampling": t_sample, "calibration_and_estimation": time.perf_counter() - t0 - t_sample}},
    )
