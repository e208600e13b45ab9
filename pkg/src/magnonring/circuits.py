"""Quench preparation, Lie-Trotter compilation to {1q, CZ}, Pauli twirling and TREX.

Circuits are lists of moments. A moment holds gates on disjoint qubits and is
either all single-qubit, all CZ, all measurement, all TREX flips or a single
CHECK marker (a point where simulators may read out the state).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import EffectiveRingModel
from .spin_algebra import BondCouplings
from .twoqubit import CZ, X, Y, Z, I2, decompose_two_qubit, rx, ry, rz

ONE_QUBIT = ("RX", "RY", "RZ", "U")
MEASURE = ("MX", "MY", "MZ")
FORMAT_TAG = "magnonring-circuit v1"


def u3(theta, phi, lam):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]]
    )


def u3_params(m):
    """(theta, phi, lam) with m = e^{i g} U3(theta, phi, lam); the global phase is dropped."""
    m = np.asarray(m)
    theta = 2.0 * math.atan2(abs(m[1, 0]), abs(m[0, 0]))
    if abs(m[1, 0]) < 1e-14:
        g = np.angle(m[0, 0])
        return theta, 0.0, float(np.angle(m[1, 1]) - g)
    if abs(m[0, 0]) < 1e-14:
        g = np.angle(m[1, 0])
        return theta, 0.0, float(np.angle(-m[0, 1]) - g)
    g = np.angle(m[0, 0])
    return theta, float(np.angle(m[1, 0]) - g), float(np.angle(-m[0, 1]) - g)


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple
    params: tuple = ()

    def __post_init__(self):
        nq = 2 if self.kind == "CZ" else 1
        if len(self.qubits) != nq:
            raise ValueError(f"{self.kind} acts on {nq} qubit(s)")
        if self.kind == "CZ" and self.qubits[0] == self.qubits[1]:
            raise ValueError("CZ needs two distinct qubits")

    @property
    def angle(self):
        return self.params[0] if self.params else None

    def matrix(self):
        k = self.kind
        if k == "RX":
            return rx(self.params[0])
        if k == "RY":
            return ry(self.params[0])
        if k == "RZ":
            return rz(self.params[0])
        if k == "U":
            return u3(*self.params)
        if k == "CZ":
            return CZ
        if k == "FLIP":
            return X
        raise ValueError(f"{k} has no unitary")

    @classmethod
    def unitary(cls, qubit, m):
        return cls("U", (int(qubit),), tuple(float(x) for x in u3_params(m)))

    def to_line(self):
        return " ".join([self.kind, *map(str, self.qubits), *(repr(float(p)) for p in self.params)])

    @classmethod
    def from_line(cls, line):
        parts = line.split()
        kind = parts[0]
        nq = 2 if kind == "CZ" else 1
        return cls(kind, tuple(int(x) for x in parts[1 : 1 + nq]), tuple(float(x) for x in parts[1 + nq :]))


def _moment_kind(gates):
    kinds = {g.kind for g in gates}
    if not kinds:
        return "empty"
    if kinds <= set(ONE_QUBIT):
        return "1q"
    if kinds == {"CZ"}:
        return "cz"
    if kinds <= set(MEASURE):
        return "measure"
    if kinds == {"FLIP"}:
        return "flip"
    if kinds == {"CHECK"}:
        return "check"
    raise ValueError(f"mixed moment {sorted(kinds)}")


@dataclass
class Circuit:
    n_qubits: int
    moments: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, gates):
        gates = list(gates)
        used = [q for g in gates for q in g.qubits]
        if len(used) != len(set(used)):
            raise ValueError("a qubit appears twice in one moment")
        if any(q < 0 or q >= self.n_qubits for q in used):
            raise ValueError("qubit index out of range")
        _moment_kind(gates)
        if gates:
            self.moments.append(gates)
        return self

    def extend(self, other: "Circuit"):
        for m in other.moments:
            self.append(m)
        return self

    def copy(self):
        return Circuit(self.n_qubits, [list(m) for m in self.moments], json.loads(json.dumps(self.metadata)))

    def gates(self):
        return [g for m in self.moments for g in m]

    def count(self, kind):
        return sum(g.kind == kind for g in self.gates())

    @property
    def cz_count(self):
        return self.count("CZ")

    @property
    def two_qubit_depth(self):
        return sum(_moment_kind(m) == "cz" for m in self.moments)

    @property
    def depth(self):
        return len(self.moments)

    def measurement_basis(self):
        last = self.moments[-1] if self.moments else []
        if last and _moment_kind(last) == "measure":
            kinds = {g.kind for g in last}
            if len(kinds) == 1:
                return kinds.pop()[1]
        return None

    def unitary(self, max_qubits=10):
        """Dense unitary of all gate moments (measurements, flips and markers ignored)."""
        if self.n_qubits > max_qubits:
            raise ValueError("dense circuit unitary limited to small registers")
        dim = 1 << self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for col in range(dim):
            psi = np.zeros(dim, dtype=complex)
            psi[col] = 1.0
            apply_gates(psi, self)
            out[:, col] = psi
        return out

    # serialization ------------------------------------------------------
    def to_text(self):
        lines = [f"# {FORMAT_TAG}", "# meta " + json.dumps(self.metadata, sort_keys=True),
                 f"qubits {self.n_qubits}"]
        for m in self.moments:
            lines.append("---")
            lines.extend(g.to_line() for g in m)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        meta, n, moments, cur = {}, None, [], None
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("# meta "):
                meta = json.loads(line[len("# meta "):])
            elif line.startswith("#"):
                continue
            elif line.startswith("qubits"):
                n = int(line.split()[1])
            elif line == "---":
                cur = []
                moments.append(cur)
            else:
                if cur is None:
                    raise ValueError("gate line before the first moment separator")
                cur.append(Gate.from_line(line))
        if n is None:
            raise ValueError("missing 'qubits' header")
        circ = cls(n, [], meta)
        for m in moments:
            circ.append(m)
        return circ


def apply_gates(psi, circuit: Circuit, skip_measure=True):
    """Apply every unitary moment of circuit to the statevector psi in place."""
    from . import kernels

    n = circuit.n_qubits
    for moment in circuit.moments:
        for g in moment:
            if g.kind in MEASURE:
                if not skip_measure:
                    raise ValueError("measurement in unitary section")
                continue
            if g.kind in ("FLIP", "CHECK"):
                # TREX flips act on recorded bits, not amplitudes
                continue
            if g.kind == "CZ":
                kernels.apply_2q(psi, n, g.qubits[0], g.qubits[1], CZ)
            else:
                kernels.apply_1q(psi, n, g.qubits[0], g.matrix())
    return psi


# --------------------------------------------------------------------------
# building blocks


def prepare_quench(n_qubits: int, angle: float = 0.3 * math.pi) -> Circuit:
    if n_qubits % 2:
        raise ValueError("the quench needs an even number of qubits")
    circ = Circuit(n_qubits, metadata={"quench_angle": float(angle)})
    if angle != 0.0:
        circ.append(Gate("RX", (q,), (float(angle),)) for q in range(n_qubits // 2))
    return circ


def bond_gate_unitary(bond, tau: float) -> np.ndarray:
    """exp(-i tau h_bond) via the eigendecomposition of the hermitian 4x4 term."""
    if isinstance(bond, BondCouplings):
        h = bond.operator(include_fields=True, include_offset=False)
    else:
        h = np.asarray(bond, dtype=complex)
    if h.shape != (4, 4):
        raise ValueError("bond term must be 4x4")
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (v * np.exp(-1j * tau * w)) @ v.conj().T


def _is_identity(m, tol=1e-12):
    return abs(abs(np.trace(m)) / 2 - 1.0) < tol


def _bond_layers(model, tau, bonds, cache):
    """Per bond: synthesized layers with qubit pair (i, j)."""
    out = []
    for k in bonds:
        b = model.bonds[k]
        op = model.bond_operator(k)
        key = op.round(14).tobytes() + np.float64(tau).tobytes()
        if key not in cache:
            cache[key] = decompose_two_qubit(bond_gate_unitary(op, tau))
        out.append(((b.i, b.j), cache[key]))
    return out


class _LayerBuilder:
    """Accumulates single-qubit factors between CZ moments before emitting gates."""

    def __init__(self, n):
        self.n = n
        self.pending = [None] * n
        self.circuit_moments = []

    def single(self, q, m):
        self.pending[q] = m if self.pending[q] is None else m @ self.pending[q]

    def flush(self):
        gates = [Gate.unitary(q, m) for q, m in enumerate(self.pending)
                 if m is not None and not _is_identity(m)]
        if gates:
            self.circuit_moments.append(gates)
        self.pending = [None] * self.n

    def cz_layer(self, pairs):
        self.flush()
        self.circuit_moments.append([Gate("CZ", tuple(p)) for p in pairs])

    def add_bond_layer(self, placed):
        """Interleave several disjoint two-qubit syntheses so their CZs share moments."""
        depth = max(s.n_cz for _, s in placed) if placed else 0
        # align each synthesis to the end of the layer so shorter bonds finish together
        for (i, j), s in placed:
            a, b = s.layers[0]
            self.single(i, a)
            self.single(j, b)
        for step in range(depth):
            pairs = []
            late = []
            for (i, j), s in placed:
                if step < s.n_cz:
                    pairs.append((i, j))
                    late.append(((i, j), s.layers[step + 1]))
            self.cz_layer(pairs)
            for (i, j), (a, b) in late:
                self.single(i, a)
                self.single(j, b)


def build_trotter_circuit(
    model: EffectiveRingModel,
    tau: float,
    n_steps: int,
    quench: Circuit | None = None,
    basis: str | None = "X",
    _cache=None,
) -> Circuit:
    """Quench, then n_steps x [even-bond layer; odd-bond layer], then measurement."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    n = model.n_sites
    quench = prepare_quench(n) if quench is None else quench
    cache = {} if _cache is None else _cache
    even, odd = model.fragments()
    even_layer = _bond_layers(model, tau, even, cache)
    odd_layer = _bond_layers(model, tau, odd, cache)
    circ = Circuit(n)
    circ.extend(quench)
    lb = _LayerBuilder(n)
    for _ in range(n_steps):
        lb.add_bond_layer(even_layer)
        lb.add_bond_layer(odd_layer)
    lb.flush()
    for m in lb.circuit_moments:
        circ.append(m)
    if basis is not None:
        basis = basis.upper()
        if basis not in ("X", "Y", "Z"):
            raise ValueError("basis must be X, Y or Z")
        circ.append(Gate("M" + basis, (q,)) for q in range(n))
    cz_even = sum(s.n_cz for _, s in even_layer)
    cz_odd = sum(s.n_cz for _, s in odd_layer)
    d_even = max((s.n_cz for _, s in even_layer), default=0)
    d_odd = max((s.n_cz for _, s in odd_layer), default=0)
    circ.metadata = {
        "q_label": model.q.label,
        "n_trotter_steps": int(n_steps),
        "tau": float(tau),
        "basis": basis,
        "quench_angle": quench.metadata.get("quench_angle"),
        "cz_per_step": cz_even + cz_odd,
        "two_qubit_depth_per_step": d_even + d_odd,
        # a standalone step: 1q layer before, between and after every CZ moment
        "depth_per_step": 2 * (d_even + d_odd) + 1,
        "cz_count": circ.cz_count,
        "two_qubit_depth": circ.two_qubit_depth,
        "twirl_seed": None,
        "trex_mask": None,
    }
    return circ


def trotter_step_unitary(model: EffectiveRingModel, tau: float, max_sites=12):
    """Dense U_odd U_even built from exact bond exponentials (oracle for the compiler)."""
    from .hamiltonian import embed_two_site

    n = model.n_sites
    if n > max_sites:
        raise ValueError("dense Trotter step limited to small N")
    even, odd = model.fragments()
    u = np.eye(1 << n, dtype=complex)
    for k in list(even) + list(odd):
        b = model.bonds[k]
        u = embed_two_site(bond_gate_unitary(model.bond_operator(k), tau), b.i, b.j, n) @ u
    return u


# --------------------------------------------------------------------------
# Pauli twirling

PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def _cz_conjugation_table():
    """(a, b) -> (a', b') with CZ (P_a x P_b) CZ = +/- P_a' x P_b'."""
    table = {}
    for a, pa in PAULIS.items():
        for b, pb in PAULIS.items():
            m = CZ @ np.kron(pa, pb) @ CZ
            for a2, qa in PAULIS.items():
                for b2, qb in PAULIS.items():
                    ov = np.trace(np.kron(qa, qb).conj().T @ m) / 4
                    if abs(abs(ov) - 1) < 1e-12:
                        table[(a, b)] = (a2, b2)
    return table


CZ_PAULI_TABLE = _cz_conjugation_table()


def _merge_single(moment, q, m):
    """Left-multiply qubit q's gate in a 1q moment by m (or add a new gate)."""
    for k, g in enumerate(moment):
        if g.qubits[0] == q:
            moment[k] = Gate.unitary(q, m @ g.matrix())
            return
    moment.append(Gate.unitary(q, m))


def _merge_single_after(moment, q, m):
    """Right-multiply: m acts before the existing gate."""
    for k, g in enumerate(moment):
        if g.qubits[0] == q:
            moment[k] = Gate.unitary(q, g.matrix() @ m)
            return
    moment.append(Gate.unitary(q, m))


def pauli_twirl(circuit: Circuit, seed) -> Circuit:
    """Wrap every CZ in random Paulis (before) and their CZ-conjugates (after)."""
    rng = np.random.default_rng(seed)
    labels = list(PAULIS)
    moments = [list(m) for m in circuit.moments]
    out = []
    k = 0
    while k < len(moments):
        m = moments[k]
        if _moment_kind(m) != "cz":
            out.append(m)
            k += 1
            continue
        if not out or _moment_kind(out[-1]) != "1q":
            out.append([])
        before = out[-1]
        after = []
        for g in m:
            a, b = labels[rng.integers(4)], labels[rng.integers(4)]
            a2, b2 = CZ_PAULI_TABLE[(a, b)]
            i, j = g.qubits
            if a != "I":
                _merge_single(before, i, PAULIS[a])
            if b != "I":
                _merge_single(before, j, PAULIS[b])
            if a2 != "I":
                after.append((i, PAULIS[a2]))
            if b2 != "I":
                after.append((j, PAULIS[b2]))
        out.append(m)
        nxt = moments[k + 1] if k + 1 < len(moments) else None
        if nxt is not None and _moment_kind(nxt) == "1q":
            for q, p in after:
                _merge_single_after(nxt, q, p)
        elif after:
            out.append([Gate.unitary(q, p) for q, p in after])
        k += 1
    twirled = Circuit(circuit.n_qubits, [], dict(circuit.metadata))
    for m in out:
        twirled.append(m)
    twirled.metadata["twirl_seed"] = None if seed is None else int(seed)
    return twirled


# --------------------------------------------------------------------------
# TREX


@dataclass
class TrexRecord:
    mask: tuple
    factors: tuple | None = None

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.mask):
            raise ValueError("flip bits must be 0 or 1")
        if self.factors is not None and any(not (0 < f <= 1) for f in self.factors):
            raise ValueError("symmetrization factors must lie in (0, 1]")


def random_trex_mask(n, seed):
    rng = np.random.default_rng(seed)
    return tuple(int(b) for b in rng.integers(0, 2, n))


def attach_trex(circuit: Circuit, seed=None, mask=None) -> Circuit:
    """Insert X flips right before the terminal measurement and record the mask."""
    if not circuit.moments or _moment_kind(circuit.moments[-1]) != "measure":
        raise ValueError("attach_trex needs terminal measurements")
    n = circuit.n_qubits
    if mask is None:
        mask = random_trex_mask(n, seed)
    mask = tuple(int(b) for b in mask)
    TrexRecord(mask)
    out = Circuit(n, [list(m) for m in circuit.moments[:-1]], dict(circuit.metadata))
    flips = [Gate("FLIP", (q,)) for q in range(n) if mask[q]]
    if flips:
        out.moments.append(flips)
    out.moments.append(list(circuit.moments[-1]))
    out.metadata["trex_mask"] = list(mask)
    return out
