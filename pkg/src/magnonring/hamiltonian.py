"""Material presets, microscopic and effective ring Hamiltonians.

The effective model on ring sites i = 0..N-1 is

    H2 = sum_i [ Jperp_i (Sx Sx + Sy Sy) + Jz_i Sz Sz + Jx_i (Sx Sy - Sy Sx) ]_(i, i+1)
         + sum_i h_i Sz_i + E0

and the dynamics use the centered version H' = H2 - alpha Sz_tot with
alpha = mean(h_i). Spin-1/2 operators are S = sigma/2, |0> = up (m = 3/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .lattice import (
    LatticeSpec,
    SupercellChain,
    WaveVector,
    build_supercell_chain,
    high_symmetry_point,
    twist_matrix,
)
from .spin_algebra import (
    BondCouplings,
    dimer_bond_operator,
    embed,
    extract_bond_couplings,
    project_quartet,
    spin_vector,
    triangle_operator,
    truncate_two_level,
)


class SizeLimit(MemoryError):
    """Requested Hilbert space exceeds the configured budget."""


@dataclass(frozen=True)
class MaterialPreset:
    name: str
    A: float
    a_bare: float
    a_renorm: float
    J_reported: float  # nearest-neighbour J of the classical spin-3/2 model, a = 9/4 J
    J_experiment: float

    def coupling(self, a_choice: str = "bare") -> float:
        if a_choice == "bare":
            return self.a_bare
        if a_choice in ("renorm", "renormalized"):
            return self.a_renorm
        raise ValueError(f"a_choice must be 'bare' or 'renorm', got {a_choice!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "A": self.A,
            "a_bare": self.a_bare,
            "a_renorm": self.a_renorm,
            "J_reported": self.J_reported,
            "J_experiment": self.J_experiment,
        }


# meV
PRESETS = {
    "CrCl3": MaterialPreset("CrCl3", 443.8, 3.4, 2.7, 1.21, 0.95),
    "CrBr3": MaterialPreset("CrBr3", 438.8, 3.2, 3.1, 1.38, 1.36),
    "CrI3": MaterialPreset("CrI3", 429.9, 3.0, 3.7, 1.64, 2.01),
}


def material_preset(name: str) -> MaterialPreset:
    try:
        return PRESETS[name]
    except KeyError:
        for key, val in PRESETS.items():
            if key.lower() == str(name).lower():
                return val
        raise ValueError(f"unknown material {name!r}; known: {', '.join(PRESETS)}") from None


def coupling_from_J(J: float) -> float:
    """Inter-center coupling a of the three-spin model from a spin-3/2 Heisenberg J."""
    return 9.0 / 4.0 * J


def J_from_coupling(a: float) -> float:
    return 4.0 / 9.0 * a


def _resolve_couplings(preset, a_choice, a_perp, a_parallel):
    a = preset.coupling(a_choice)
    return (a if a_perp is None else float(a_perp), a if a_parallel is None else float(a_parallel))


# --------------------------------------------------------------------------
# microscopic three-spins-per-center model


def assemble_microscopic(
    chain: SupercellChain,
    preset: MaterialPreset,
    q: WaveVector,
    a_choice: str = "bare",
    *,
    a_perp=None,
    a_parallel=None,
    A=None,
    max_dim: int = 1 << 18,
):
    """Sparse 2^(6 n_cells) Hamiltonian of the three-spins-per-center model."""
    n_spins = 3 * chain.n_sites
    dim = 1 << n_spins
    if dim > max_dim:
        raise SizeLimit(f"microscopic model needs dim 2^{n_spins} > budget {max_dim}")
    a_p, a_z = _resolve_couplings(preset, a_choice, a_perp, a_parallel)
    onsite = preset.A if A is None else float(A)
    ops = spin_vector(1)
    emb = {}

    def op(spin, comp):
        key = (spin, comp)
        if key not in emb:
            emb[key] = embed(ops[comp], spin, n_spins, sparse=True)
        return emb[key]

    h = sp.csr_matrix((dim, dim), dtype=complex)
    for c in range(chain.n_sites):
        for x, y in ((0, 1), (1, 2), (2, 0)):
            for comp in range(3):
                h = h - onsite * (op(3 * c + x, comp) @ op(3 * c + y, comp))
    for bond in chain.ring_bonds:
        for disp in bond.displacements:
            m = twist_matrix(a_p, a_z, disp.vector, q).matrix
            si, sj = 3 * bond.i + disp.neighbor, 3 * bond.j + disp.neighbor
            for u in range(3):
                for v in range(3):
                    if m[u, v] != 0.0:
                        h = h - m[u, v] * (op(si, u) @ op(sj, v))
    return h.tocsr()


# --------------------------------------------------------------------------
# effective ring model


@dataclass(frozen=True)
class RingBondTerm:
    i: int
    j: int
    couplings: BondCouplings

    @property
    def hop(self) -> complex:
        """Coefficient c of (c/2) S+_i S-_j + h.c."""
        return complex(self.couplings.j_perp, self.couplings.j_cross)


@dataclass(frozen=True)
class EffectiveRingModel:
    n_sites: int
    bonds: tuple
    fields: np.ndarray = field(repr=False)
    alpha: float
    e_offset: float
    q: WaveVector
    preset: str = ""
    a_perp: float = 0.0
    a_parallel: float = 0.0
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def centered_fields(self) -> np.ndarray:
        return np.asarray(self.fields) - self.alpha

    def site_fields(self, centered: bool = True) -> np.ndarray:
        return self.centered_fields if centered else np.asarray(self.fields, dtype=float)

    def fragments(self):
        """Trotter partition: bonds starting on even sites, then odd sites."""
        even = [k for k, b in enumerate(self.bonds) if b.i % 2 == 0]
        odd = [k for k, b in enumerate(self.bonds) if b.i % 2 == 1]
        return even, odd

    def bond_degree(self) -> np.ndarray:
        deg = np.zeros(self.n_sites, dtype=int)
        for b in self.bonds:
            deg[b.i] += 1
            deg[b.j] += 1
        return deg

    def bond_operator(self, k: int, centered: bool = True) -> np.ndarray:
        """4x4 two-site term of bond k including its share of the site fields."""
        b = self.bonds[k]
        c = b.couplings
        fields = self.site_fields(centered)
        deg = self.bond_degree()
        local = BondCouplings(
            c.j_perp,
            c.j_z,
            c.j_cross,
            fields[b.i] / deg[b.i],
            fields[b.j] / deg[b.j],
            0.0,
        )
        return local.operator()

    def to_dict(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "bonds": [dict(i=b.i, j=b.j, **b.couplings.to_dict()) for b in self.bonds],
            "fields": [float(x) for x in self.fields],
            "centered_fields": [float(x) for x in self.centered_fields],
            "alpha": self.alpha,
            "e_offset": self.e_offset,
            "q": self.q.to_dict(),
            "preset": self.preset,
            "a_perp": self.a_perp,
            "a_parallel": self.a_parallel,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d) -> "EffectiveRingModel":
        bonds = tuple(
            RingBondTerm(
                int(b["i"]),
                int(b["j"]),
                BondCouplings(
                    b["j_perp"], b["j_z"], b["j_cross"], b["h_left"], b["h_right"], b["e_offset"]
                ),
            )
            for b in d["bonds"]
        )
        return cls(
            int(d["n_sites"]),
            bonds,
            np.asarray(d["fields"], dtype=float),
            float(d["alpha"]),
            float(d["e_offset"]),
            WaveVector.from_dict(d["q"]),
            d.get("preset", ""),
            float(d.get("a_perp", 0.0)),
            float(d.get("a_parallel", 0.0)),
            dict(d.get("meta", {})),
        )


@lru_cache(maxsize=4096)
def _bond_couplings_cached(a_perp, a_parallel, phi_key, neighbor):
    from .lattice import twist_from_angle

    tw = twist_from_angle(a_perp, a_parallel, phi_key)
    return extract_bond_couplings(dimer_bond_operator(tw.matrix, neighbor), tw)


@lru_cache(maxsize=64)
def onsite_quartet_energy(A: float) -> float:
    """Scalar that the projected, truncated triangle term leaves on a center."""
    op = truncate_two_level(project_quartet(triangle_operator(A)))
    e = float(op[0, 0].real)
    if np.max(np.abs(op - e * np.eye(2))) > 1e-9 * max(1.0, abs(A)):
        raise ValueError("projected on-site term is not a scalar")
    return e


def assemble_effective_ring(
    chain: SupercellChain,
    preset: MaterialPreset,
    q: WaveVector,
    a_choice: str = "bare",
    *,
    a_perp=None,
    a_parallel=None,
) -> EffectiveRingModel:
    a_p, a_z = _resolve_couplings(preset, a_choice, a_perp, a_parallel)
    n = chain.n_sites
    fields = np.zeros(n)
    offset = n * onsite_quartet_energy(preset.A)
    terms = []
    for bond in chain.ring_bonds:
        total = BondCouplings()
        for disp in bond.displacements:
            phi = float(np.dot(disp.vector, q.vec))
            total = total + _bond_couplings_cached(a_p, a_z, phi, disp.neighbor)
        fields[bond.i] += total.h_left
        fields[bond.j] += total.h_right
        offset += total.e_offset
        terms.append(
            RingBondTerm(
                bond.i,
                bond.j,
                BondCouplings(total.j_perp, total.j_z, total.j_cross, 0.0, 0.0, 0.0, total.residual),
            )
        )
    alpha = float(np.mean(fields))
    meta = {
        "n_cells": chain.n_cells,
        "a_choice": a_choice,
        "A": preset.A,
        "lattice": chain.lattice.to_dict(),
        "ring_bonds": [
            {"i": b.i, "j": b.j, "neighbors": [d.neighbor for d in b.displacements]}
            for b in chain.ring_bonds
        ],
    }
    return EffectiveRingModel(
        n, tuple(terms), fields, alpha, float(offset), q, preset.name, a_p, a_z, meta
    )


def build_model(material="CrBr3", label="M", n_cells=3, a_choice="bare", lattice=None, **kw):
    """Shortcut: preset + high-symmetry point + chain -> centered effective model."""
    lattice = lattice or LatticeSpec.honeycomb()
    q = label if isinstance(label, WaveVector) else high_symmetry_point(label, lattice)
    chain = build_supercell_chain(n_cells, lattice)
    return assemble_effective_ring(chain, material_preset(material), q, a_choice, **kw)


# --------------------------------------------------------------------------
# operators of the effective model on 2^N


def _bits(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1).astype(np.int8)


def diagonal_energies(model: EffectiveRingModel, centered: bool = True, include_offset: bool = False):
    """Diagonal (Sz Sz + field) part of the ring Hamiltonian on the computational basis."""
    n = model.n_sites
    idx = np.arange(1 << n, dtype=np.int64)
    diag = np.zeros(1 << n)
    fields = model.site_fields(centered)
    for b in model.bonds:
        zi = 0.5 - ((idx >> (n - 1 - b.i)) & 1)
        zj = 0.5 - ((idx >> (n - 1 - b.j)) & 1)
        diag += b.couplings.j_z * zi * zj
    for s in range(n):
        if fields[s] != 0.0:
            diag += fields[s] * (0.5 - ((idx >> (n - 1 - s)) & 1))
    if include_offset:
        diag += model.e_offset
    return diag


def sparse_hamiltonian(
    model: EffectiveRingModel,
    centered: bool = True,
    include_offset: bool = False,
    bonds=None,
    with_fields: bool = True,
    max_sites: int = 20,
):
    """Explicit sparse matrix of H' (or H2) or of a subset of its bonds."""
    n = model.n_sites
    if n > max_sites:
        raise SizeLimit(f"explicit sparse matrix for N={n} exceeds max_sites={max_sites}")
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    sel = range(len(model.bonds)) if bonds is None else bonds
    diag = np.zeros(dim)
    rows, cols, vals = [], [], []
    for k in sel:
        b = model.bonds[k]
        zi = 0.5 - ((idx >> (n - 1 - b.i)) & 1)
        zj = 0.5 - ((idx >> (n - 1 - b.j)) & 1)
        diag += b.couplings.j_z * zi * zj
        if b.hop != 0 and b.i != b.j:
            mi, mj = 1 << (n - 1 - b.i), 1 << (n - 1 - b.j)
            src = idx[((idx & mi) != 0) & ((idx & mj) == 0)]  # i down, j up
            dst = src ^ (mi | mj)
            rows += [dst, src]
            cols += [src, dst]
            vals += [np.full(src.size, 0.5 * b.hop), np.full(src.size, 0.5 * np.conj(b.hop))]
    if with_fields:
        fields = model.site_fields(centered)
        deg = model.bond_degree()
        share = np.zeros(n)
        if bonds is None:
            share = fields
        else:
            for k in sel:
                b = model.bonds[k]
                share[b.i] += fields[b.i] / deg[b.i]
                share[b.j] += fields[b.j] / deg[b.j]
        for s in range(n):
            if share[s] != 0.0:
                diag += share[s] * (0.5 - ((idx >> (n - 1 - s)) & 1))
    if include_offset:
        diag += model.e_offset
    rows.append(idx)
    cols.append(idx)
    vals.append(diag.astype(complex))
    h = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    h.sum_duplicates()
    return h


class RingOperator:
    """Matrix-free H' acting on 2^N state vectors via the compiled hopping kernel."""

    def __init__(self, model: EffectiveRingModel, centered: bool = True, include_offset: bool = False):
        self.model = model
        self.n = model.n_sites
        self.dim = 1 << self.n
        self.diag = diagonal_energies(model, centered, include_offset)
        hop = [(b.i, b.j, b.hop) for b in model.bonds if b.hop != 0 and b.i != b.j]
        self.site_i = np.array([h[0] for h in hop], dtype=np.int64)
        self.site_j = np.array([h[1] for h in hop], dtype=np.int64)
        self.coef = np.array([h[2] for h in hop], dtype=np.complex128)
        self.matvec_count = 0

    def apply(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        psi = np.ascontiguousarray(psi, dtype=np.complex128)
        if out is None:
            out = np.empty_like(psi)
        np.multiply(self.diag, psi, out=out)
        if self.coef.size:
            kernels.hop_accumulate(psi, out, self.n, self.site_i, self.site_j, self.coef)
        self.matvec_count += 1
        return out

    __matmul__ = apply

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.apply(psi)).real)


def total_sz_diag(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n)
    for s in range(n):
        out += 0.5 - ((idx >> (n - 1 - s)) & 1)
    return out


def magnetization_sectors(n: int) -> dict:
    """Basis indices grouped by number of flipped (down) spins."""
    idx = np.arange(1 << n, dtype=np.int64)
    flips = np.zeros(1 << n, dtype=np.int64)
    for s in range(n):
        flips += (idx >> s) & 1
    return {k: idx[flips == k] for k in range(n + 1)}


# --------------------------------------------------------------------------
# one-magnon sector


def fm_energy(model: EffectiveRingModel, centered: bool = True, include_offset: bool = False) -> float:
    e = sum(0.25 * b.couplings.j_z for b in model.bonds)
    e += 0.5 * float(np.sum(model.site_fields(centered)))
    return e + (model.e_offset if include_offset else 0.0)


def one_magnon_matrix(model: EffectiveRingModel, centered: bool = True) -> np.ndarray:
    """N x N block of H on |k> = site k lowered to m = 1/2, relative to the FM level."""
    n = model.n_sites
    fields = model.site_fields(centered)
    m = np.zeros((n, n), dtype=complex)
    for k in range(n):
        m[k, k] -= fields[k]
    for b in model.bonds:
        if b.i == b.j:
            continue
        m[b.i, b.i] -= 0.5 * b.couplings.j_z
        m[b.j, b.j] -= 0.5 * b.couplings.j_z
        # (c/2) S+_i S-_j maps "i lowered" to "j lowered"
        m[b.j, b.i] += 0.5 * b.hop
        m[b.i, b.j] += 0.5 * np.conj(b.hop)
    return m


def one_magnon_band(model: EffectiveRingModel, centered: bool = True, relative: bool = True):
    """Sorted single-flip eigenvalues (meV), by default relative to the FM level."""
    ev = np.linalg.eigvalsh(one_magnon_matrix(model, centered))
    if not relative:
        ev = ev + fm_energy(model, centered, include_offset=True)
    return np.sort(ev)


def distinct_levels(values, tol: float = 1e-8):
    out = []
    for v in np.sort(np.asarray(values)):
        if not out or abs(v - out[-1]) > tol:
            out.append(float(v))
    return out


@lru_cache(maxsize=4096)
def _quartet_bond_op(a_perp, a_parallel, phi, neighbor):
    from .lattice import twist_from_angle

    tw = twist_from_angle(a_perp, a_parallel, phi)
    op = project_quartet(dimer_bond_operator(tw.matrix, neighbor))
    op.setflags(write=False)
    return op


def quartet_bond_operators(chain, preset, q, a_choice="bare", *, a_perp=None, a_parallel=None):
    """[(i, j, 16x16 quartet operator)] summed over the displacements of each ring bond."""
    a_p, a_z = _resolve_couplings(preset, a_choice, a_perp, a_parallel)
    out = []
    for bond in chain.ring_bonds:
        h = np.zeros((16, 16), dtype=complex)
        for disp in bond.displacements:
            h = h + _quartet_bond_op(a_p, a_z, float(np.dot(disp.vector, q.vec)), disp.neighbor)
        out.append((bond.i, bond.j, h))
    return out


def quartet_one_magnon_block(chain, preset, q, a_choice="bare", **kw):
    """(E_FM, N x N block) of H^(Q) in the sector with one center at m = 1/2.

    Built directly from 16x16 projected bond operators; it never touches the
    two-level truncation or the coupling fit.
    """
    n = chain.n_sites
    onsite = n * onsite_quartet_energy(preset.A)
    bonds = quartet_bond_operators(chain, preset, q, a_choice, **kw)

    def level(config, site):
        return config.get(site, 0)

    e_fm = onsite
    for i, j, h in bonds:
        e_fm += h[0, 0].real
    block = np.zeros((n, n), dtype=complex)
    for r in range(n):
        block[r, r] += onsite
    for i, j, h in bonds:
        for r in range(n):
            for s in range(n):
                cr, cs = {r: 1}, {s: 1}
                others = set(range(n)) - {i, j}
                if any(level(cr, x) != level(cs, x) for x in others):
                    continue
                row = 4 * level(cr, i) + level(cr, j)
                col = 4 * level(cs, i) + level(cs, j)
                block[r, s] += h[row, col]
    return float(e_fm), block


def quartet_dense_hamiltonian(chain, preset, q, a_choice="bare", max_sites: int = 5, **kw):
    """Full 4^N matrix of H^(Q) (small N only)."""
    n = chain.n_sites
    if n > max_sites:
        raise SizeLimit(f"dense H^(Q) limited to {max_sites} centers")
    dim = 4**n
    h = np.eye(dim, dtype=complex) * n * onsite_quartet_energy(preset.A)
    for i, j, hb in quartet_bond_operators(chain, preset, q, a_choice, **kw):
        h += _embed_pair(hb, i, j, n, 4)
    return h


def _embed_pair(op, i, j, n, d):
    """Embed a (d*d x d*d) operator acting on sites (i, j) of an n-site register."""
    if i == j:
        raise ValueError("pair sites must differ")
    t = np.asarray(op).reshape(d, d, d, d)
    full = np.zeros((d**n, d**n), dtype=complex)
    eye = np.eye(d)
    for a in range(d):
        for b in range(d):
            for c in range(d):
                for e in range(d):
                    v = t[a, b, c, e]
                    if v == 0:
                        continue
                    ea = np.zeros((d, d))
                    ea[a, c] = 1.0
                    eb = np.zeros((d, d))
                    eb[b, e] = 1.0
                    factors = [eye] * n
                    factors[i] = ea
                    factors[j] = eb
                    term = factors[0]
                    for f in factors[1:]:
                        term = np.kron(term, f)
                    full += v * term
    return full


def embed_two_site(op4, i, j, n):
    """Dense 2^n embedding of a 4x4 operator on qubits (i, j)."""
    return _embed_pair(op4, i, j, n, 2)


# --------------------------------------------------------------------------
# Lie-Trotter error estimate


@dataclass(frozen=True)
class TrotterErrorEstimate:
    value: float
    commutator_norm: float
    fragmentation: str
    method: str
    tau: float
    n_steps: int

    def to_dict(self):
        return {
            "epsilon_LT": self.value,
            "commutator_norm_sum": self.commutator_norm,
            "fragmentation": self.fragmentation,
            "norm_convention": self.method,
            "tau": self.tau,
            "n_steps": self.n_steps,
        }


_PAULI_LABELS = ("X", "Y", "Z")


def pauli_terms(model: EffectiveRingModel, centered: bool = True):
    """H' as a list of (sites, labels, coefficient) spin-1/2 product terms."""
    out = []
    for b in model.bonds:
        c = b.couplings
        for labels, v in ((("X", "X"), c.j_perp), (("Y", "Y"), c.j_perp), (("Z", "Z"), c.j_z),
                          (("X", "Y"), c.j_cross), (("Y", "X"), -c.j_cross)):
            if v != 0.0:
                out.append(((b.i, b.j), labels, float(v)))
    for s, h in enumerate(model.site_fields(centered)):
        if h != 0.0:
            out.append(((s,), ("Z",), float(h)))
    return out


def _term_matrix(sites, labels, coef, support):
    ops = spin_vector(1)
    factors = [np.eye(2, dtype=complex) for _ in support]
    for s, lab in zip(sites, labels):
        k = support.index(s)
        factors[k] = factors[k] @ ops[_PAULI_LABELS.index(lab)]
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return coef * out


def _pairwise_local_norms(fragments):
    """Sum of ||[F_l, F_m]|| over pairs of local fragments sharing a site.

    Each fragment is a list of (sites, labels, coef) terms; fragments on
    disjoint supports commute and are skipped.
    """
    total = 0.0
    supports = [set(s for t in frag for s in t[0]) for frag in fragments]
    for a in range(len(fragments)):
        for b in range(a + 1, len(fragments)):
            if not supports[a] & supports[b]:
                continue
            support = sorted(supports[a] | supports[b])
            fa = sum(_term_matrix(*t, support) for t in fragments[a])
            fb = sum(_term_matrix(*t, support) for t in fragments[b])
            total += np.linalg.norm(fa @ fb - fb @ fa, 2)
    return float(total)


def _bond_fragments(model, centered=True):
    """One fragment per ring bond, site fields split evenly between adjacent bonds."""
    fields = model.site_fields(centered)
    deg = model.bond_degree()
    frags = []
    for b in model.bonds:
        c = b.couplings
        terms = [((b.i, b.j), ("X", "X"), c.j_perp), ((b.i, b.j), ("Y", "Y"), c.j_perp),
                 ((b.i, b.j), ("Z", "Z"), c.j_z), ((b.i, b.j), ("X", "Y"), c.j_cross),
                 ((b.i, b.j), ("Y", "X"), -c.j_cross)]
        terms += [((b.i,), ("Z",), fields[b.i] / deg[b.i]), ((b.j,), ("Z",), fields[b.j] / deg[b.j])]
        frags.append([t for t in terms if t[2] != 0.0])
    return [f for f in frags if f]


def _exact_layer_norm(model, centered=True):
    even, odd = model.fragments()
    he = sparse_hamiltonian(model, centered, bonds=even)
    ho = sparse_hamiltonian(model, centered, bonds=odd)
    c = (1j * (he @ ho - ho @ he)).tocsc()
    if c.nnz == 0:
        return 0.0
    if c.shape[0] <= 1024:
        return float(np.max(np.abs(np.linalg.eigvalsh(c.toarray()))))
    ev = spla.eigsh(c, k=1, which="LM", return_eigenvectors=False, tol=1e-10)
    return float(np.max(np.abs(ev)))


FRAGMENTATIONS = ("pauli", "bond", "layer")


def commutator_norm_sum(model, fragmentation="pauli", exact_max_sites=14, centered=True):
    """(sum_{l<m} ||[H_l, H_m]||, description) for a chosen split H' = sum_l H_l."""
    if fragmentation == "pauli":
        frags = [[t] for t in pauli_terms(model, centered)]
        return _pairwise_local_norms(frags), "spectral norm, one fragment per Pauli-string term"
    if fragmentation == "bond":
        return (
            _pairwise_local_norms(_bond_fragments(model, centered)),
            "spectral norm, one fragment per ring bond",
        )
    if fragmentation == "layer":
        if model.n_sites <= exact_max_sites:
            return (
                _exact_layer_norm(model, centered),
                "spectral norm of [H_even, H_odd], exact sparse eigensolver",
            )
        return (
            _pairwise_local_norms(_bond_fragments(model, centered)),
            "even/odd layers, nearest-neighbour bond-commutator upper bound",
        )
    raise ValueError(f"fragmentation must be one of {FRAGMENTATIONS}")


def lie_trotter_error_estimate(
    model: EffectiveRingModel,
    tau: float,
    n_steps: int,
    fragmentation: str = "pauli",
    exact_max_sites: int = 14,
    centered: bool = True,
) -> TrotterErrorEstimate:
    """epsilon_LT = (T_max tau / 2) sum_{l<m} ||[H_l, H_m]|| with T_max = n_steps tau."""
    norm, method = commutator_norm_sum(model, fragmentation, exact_max_sites, centered)
    t_max = n_steps * tau
    return TrotterErrorEstimate(
        0.5 * t_max * tau * norm, norm, fragmentation, method, float(tau), int(n_steps)
    )
