"""Honeycomb geometry, ring re-periodization and twisted couplings.

Conventions (fixed, recorded in every run manifest):

* ``a1 = a (1, 0)``, ``a2 = a (1/2, sqrt(3)/2)``, B basis site at ``(a1 + a2)/3``.
* ``delta_1 = (a1 + a2)/3``, ``delta_2 = delta_1 - a1``, ``delta_3 = delta_1 - a2``
  point from an A site to its three B neighbours.
* The supercell is ``N x 1`` along ``a1`` and wraps along ``a2`` with period one,
  so ``delta_3`` folds onto the intra-cell ring bond.
* K = (2 b1 + b2)/3 and M = b2/2 in terms of the reciprocal vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SUBLATTICE_A = "A"
SUBLATTICE_B = "B"

_LABEL_ALIASES = {
    "G": "G",
    "GAMMA": "G",
    "Γ": "G",
    "K": "K",
    "M": "M",
}


def canonical_label(label: str) -> str:
    """Map user spellings of the high-symmetry labels onto 'G', 'K', 'M'."""
    key = str(label).strip()
    key = _LABEL_ALIASES.get(key.upper(), _LABEL_ALIASES.get(key))
    if key is None:
        raise ValueError(f"unknown high-symmetry label {label!r}; expected one of Γ/G, K, M")
    return key


@dataclass(frozen=True)
class LatticeSpec:
    lattice_constant: float = 1.0
    a1: tuple = (1.0, 0.0)
    a2: tuple = (0.5, math.sqrt(3.0) / 2.0)

    def __post_init__(self):
        a1 = np.asarray(self.a1, dtype=float)
        a2 = np.asarray(self.a2, dtype=float)
        if abs(a1[0] * a2[1] - a1[1] * a2[0]) < 1e-12:
            raise ValueError("lattice vectors a1, a2 are linearly dependent")

    @classmethod
    def honeycomb(cls, lattice_constant: float = 1.0) -> "LatticeSpec":
        a = float(lattice_constant)
        return cls(lattice_constant=a, a1=(a, 0.0), a2=(0.5 * a, math.sqrt(3.0) / 2.0 * a))

    @property
    def vec_a1(self) -> np.ndarray:
        return np.asarray(self.a1, dtype=float)

    @property
    def vec_a2(self) -> np.ndarray:
        return np.asarray(self.a2, dtype=float)

    @property
    def basis_A(self) -> np.ndarray:
        return np.zeros(2)

    @property
    def basis_B(self) -> np.ndarray:
        return (self.vec_a1 + self.vec_a2) / 3.0

    @property
    def deltas(self) -> np.ndarray:
        """Rows are delta_1, delta_2, delta_3 (A -> B nearest-neighbour vectors)."""
        d1 = self.basis_B - self.basis_A
        return np.array([d1, d1 - self.vec_a1, d1 - self.vec_a2])

    def reciprocal(self) -> tuple[np.ndarray, np.ndarray]:
        """b1, b2 with a_i . b_j = 2 pi delta_ij."""
        amat = np.array([self.vec_a1, self.vec_a2])
        bmat = 2.0 * math.pi * np.linalg.inv(amat).T
        return bmat[0], bmat[1]

    def to_dict(self) -> dict:
        return {
            "lattice_constant": self.lattice_constant,
            "a1": list(self.a1),
            "a2": list(self.a2),
            "basis_B": self.basis_B.tolist(),
            "deltas": self.deltas.tolist(),
        }


@dataclass(frozen=True)
class WaveVector:
    qx: float
    qy: float
    label: str = "custom"

    @property
    def vec(self) -> np.ndarray:
        return np.array([self.qx, self.qy])

    def to_dict(self) -> dict:
        return {"qx": self.qx, "qy": self.qy, "label": self.label}

    @classmethod
    def from_dict(cls, d) -> "WaveVector":
        return cls(float(d["qx"]), float(d["qy"]), d.get("label", "custom"))


def high_symmetry_point(label: str, lattice: LatticeSpec | None = None) -> WaveVector:
    lattice = lattice or LatticeSpec.honeycomb()
    key = canonical_label(label)
    b1, b2 = lattice.reciprocal()
    if key == "G":
        q = np.zeros(2)
    elif key == "K":
        q = (2.0 * b1 + b2) / 3.0
    else:
        q = 0.5 * b2
    return WaveVector(float(q[0]), float(q[1]), key)


@dataclass(frozen=True)
class Site:
    index: int
    cell: int
    sublattice: str
    position: tuple


@dataclass(frozen=True)
class Displacement:
    """One honeycomb bond folded onto a ring bond.

    ``neighbor`` is 0, 1, 2 for delta_1..3 and also names the constituent
    spin (a, b, c) that carries this bond in the microscopic model.
    ``sign`` is +1 when the ring bond runs A -> B and -1 for B -> A.
    """

    neighbor: int
    sign: int
    vector: tuple


@dataclass(frozen=True)
class RingBond:
    i: int
    j: int
    displacements: tuple

    @property
    def multiplicity(self) -> int:
        return len(self.displacements)


@dataclass(frozen=True)
class SupercellChain:
    n_cells: int
    lattice: LatticeSpec
    sites: tuple = field(repr=False)
    ring_bonds: tuple = field(repr=False)

    @property
    def n_sites(self) -> int:
        return 2 * self.n_cells

    def is_single_cycle(self) -> bool:
        """Walk the ring bonds from site 0 and check every site is visited once."""
        n = self.n_sites
        nxt = {}
        for b in self.ring_bonds:
            if b.i in nxt:
                return False
            nxt[b.i] = b.j
        seen, cur = [], 0
        for _ in range(n):
            seen.append(cur)
            if cur not in nxt:
                return False
            cur = nxt[cur]
        return cur == 0 and sorted(seen) == list(range(n))

    def total_multiplicity(self) -> int:
        return sum(b.multiplicity for b in self.ring_bonds)


def build_supercell_chain(n_cells: int, lattice: LatticeSpec | None = None) -> SupercellChain:
    if int(n_cells) != n_cells or n_cells < 1:
        raise ValueError(f"n_cells must be a positive integer, got {n_cells!r}")
    n_cells = int(n_cells)
    lattice = lattice or LatticeSpec.honeycomb()
    a1 = lattice.vec_a1
    d = lattice.deltas
    sites = []
    for c in range(n_cells):
        ra = lattice.basis_A + c * a1
        rb = lattice.basis_B + c * a1
        sites.append(Site(2 * c, c, SUBLATTICE_A, tuple(ra)))
        sites.append(Site(2 * c + 1, c, SUBLATTICE_B, tuple(rb)))

    n = 2 * n_cells
    bonds = []
    for c in range(n_cells):
        # A_c -> B_c: delta_1 inside the cell, delta_3 through the a2 wrap
        bonds.append(
            RingBond(
                2 * c,
                2 * c + 1,
                (Displacement(0, +1, tuple(d[0])), Displacement(2, +1, tuple(d[2]))),
            )
        )
        # B_c -> A_{c+1}: the A_{c+1} -> B_c bond is delta_2, traversed backwards
        bonds.append(
            RingBond(2 * c + 1, (2 * c + 2) % n, (Displacement(1, -1, tuple(-d[1])),))
        )
    return SupercellChain(n_cells, lattice, tuple(sites), tuple(bonds))


@dataclass(frozen=True)
class TwistedCoupling:
    matrix: np.ndarray = field(repr=False)
    phi: float
    a_perp: float
    a_parallel: float


def twist_matrix(a_perp: float, a_parallel: float, displacement, q) -> TwistedCoupling:
    """Coupling matrix for ``-S_i . A . S_j`` with the transverse plane rotated by d.q."""
    qv = q.vec if isinstance(q, WaveVector) else np.asarray(q, dtype=float)
    phi = float(np.dot(np.asarray(displacement, dtype=float), qv))
    return twist_from_angle(a_perp, a_parallel, phi)


def twist_from_angle(a_perp: float, a_parallel: float, phi: float) -> TwistedCoupling:
    c, s = math.cos(phi), math.sin(phi)
    m = np.array(
        [
            [a_perp * c, a_perp * s, 0.0],
            [-a_perp * s, a_perp * c, 0.0],
            [0.0, 0.0, a_parallel],
        ]
    )
    return TwistedCoupling(m, phi, float(a_perp), float(a_parallel))
