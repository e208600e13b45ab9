"""Spin operators, Clebsch-Gordan recoupling and the two-step model reduction.

Basis convention: levels of every site are ordered by decreasing m, and
site 0 is the slowest-varying tensor factor. For spin-1/2 that makes
``|0> = up``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, reduce

import numpy as np
import scipy.sparse as sp

RESIDUAL_TOL = 1e-12


class ResidualTooLarge(ValueError):
    """The truncated bond operator has terms outside the ring-model operator basis."""


@lru_cache(maxsize=None)
def spin_matrices(twice_s: int):
    """(Sx, Sy, Sz, S+, S-) for spin s = twice_s/2 with m ordered s, s-1, ..., -s."""
    s = twice_s / 2.0
    m = s - np.arange(twice_s + 1)
    sz = np.diag(m).astype(complex)
    sp_ = np.zeros((twice_s + 1, twice_s + 1), dtype=complex)
    for k in range(1, twice_s + 1):
        # <m+1|S+|m> = sqrt(s(s+1) - m(m+1))
        sp_[k - 1, k] = math.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    sm = sp_.conj().T
    sx = 0.5 * (sp_ + sm)
    sy = -0.5j * (sp_ - sm)
    for mat in (sx, sy, sz, sp_, sm):
        mat.setflags(write=False)
    return sx, sy, sz, sp_, sm


def spin_vector(twice_s: int = 1):
    sx, sy, sz, _, _ = spin_matrices(twice_s)
    return (sx, sy, sz)


def embed(op, site: int, n_sites: int, local_dim: int = 2, sparse: bool = False):
    """Place a single-site operator on ``site`` of an ``n_sites`` register."""
    if sparse:
        left = sp.identity(local_dim**site, format="csr", dtype=complex)
        right = sp.identity(local_dim ** (n_sites - site - 1), format="csr", dtype=complex)
        return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")
    left = np.eye(local_dim**site)
    right = np.eye(local_dim ** (n_sites - site - 1))
    return np.kron(np.kron(left, op), right)


def clebsch_gordan(j1, m1, j2, m2, j, m) -> float:
    """<j1 m1; j2 m2 | j m> (Condon-Shortley), Racah's closed formula.

    Arguments may be ints, floats or Fractions (half-integers allowed).
    """
    j1, m1, j2, m2, j, m = (Fraction(x).limit_denominator(2) for x in (j1, m1, j2, m2, j, m))
    if m1 + m2 != m or abs(m1) > j1 or abs(m2) > j2 or abs(m) > j:
        return 0.0
    if j < abs(j1 - j2) or j > j1 + j2:
        return 0.0

    def f(x):
        if x.denominator != 1 or x < 0:
            raise ValueError("non-integral factorial argument")
        return math.factorial(int(x))

    pre = Fraction(
        (2 * j + 1) * f(j1 + j2 - j) * f(j1 - j2 + j) * f(-j1 + j2 + j),
        f(j1 + j2 + j + 1),
    )
    pre *= f(j1 + m1) * f(j1 - m1) * f(j2 + m2) * f(j2 - m2) * f(j + m) * f(j - m)
    total = Fraction(0)
    k = 0
    while True:
        args = (
            k,
            j1 + j2 - j - k,
            j1 - m1 - k,
            j2 + m2 - k,
            j - j2 + m1 + k,
            j - j1 - m2 + k,
        )
        if args[1] < 0 or args[2] < 0 or args[3] < 0:
            break
        if args[4] >= 0 and args[5] >= 0:
            den = 1
            for a in args:
                den *= f(a)
            total += Fraction((-1) ** k, den)
        k += 1
    return float(math.sqrt(pre) * total)


@dataclass(frozen=True)
class CgBasisChange:
    unitary: np.ndarray
    labels: tuple  # (S12, S, m) per new basis row
    quartet_index_range: tuple = (0, 4)


@lru_cache(maxsize=1)
def cg_unitary() -> CgBasisChange:
    """Rows are coupled states |(S_ab) S m> expanded in the product basis |m_a m_b m_c>.

    Order: quartet (S=3/2, m = 3/2 .. -3/2), then the S_ab=1 doublet, then
    the S_ab=0 doublet (m = 1/2, -1/2 each).
    """
    half = Fraction(1, 2)
    ms = (half, -half)
    states = [(1, Fraction(3, 2), Fraction(3, 2) - k) for k in range(4)]
    states += [(1, half, half), (1, half, -half), (0, half, half), (0, half, -half)]
    u = np.zeros((8, 8))
    for row, (s12, s, m) in enumerate(states):
        for ia, ma in enumerate(ms):
            for ib, mb in enumerate(ms):
                c1 = clebsch_gordan(half, ma, half, mb, s12, ma + mb)
                if c1 == 0.0:
                    continue
                for ic, mc in enumerate(ms):
                    c2 = clebsch_gordan(s12, ma + mb, half, mc, s, m)
                    u[row, 4 * ia + 2 * ib + ic] += c1 * c2
    u.setflags(write=False)
    labels = tuple((int(s12), float(s), float(m)) for s12, s, m in states)
    return CgBasisChange(u, labels)


def _dense(op):
    return op.toarray() if sp.issparse(op) else np.asarray(op, dtype=complex)


def _n_sites(dim: int, local_dim: int) -> int:
    k = round(math.log(dim, local_dim)) if dim > 1 else 0
    if local_dim**k != dim:
        raise ValueError(f"dimension {dim} is not a power of {local_dim}")
    return k


def project_quartet(op):
    """P_Q U_CG^{(x)k} op U_CG^{(x)k}^dagger P_Q for an operator on k three-spin centers."""
    mat = _dense(op)
    k = _n_sites(mat.shape[0], 8)
    pq = cg_unitary().unitary[:4]
    proj = reduce(np.kron, [pq] * k) if k else np.eye(1)
    return proj @ mat @ proj.conj().T


def truncate_two_level(op):
    """Keep m in {3/2, 1/2} on every spin-3/2 site."""
    mat = _dense(op)
    k = _n_sites(mat.shape[0], 4)
    keep = np.array([0, 1])
    idx = np.zeros(1, dtype=int)
    for _ in range(k):
        idx = (4 * idx[:, None] + keep[None, :]).ravel()
    return mat[np.ix_(idx, idx)]


def triangle_operator(coupling: float) -> np.ndarray:
    """-A (S_a.S_b + S_b.S_c + S_c.S_a) on one magnetic center (8x8)."""
    ops = spin_vector(1)
    h = np.zeros((8, 8), dtype=complex)
    for x, y in ((0, 1), (1, 2), (2, 0)):
        for s in ops:
            h -= coupling * embed(s, x, 3) @ embed(s, y, 3)
    return h


def dimer_bond_operator(coupling_matrix, spin_index: int = 0) -> np.ndarray:
    """-S_{1,x} . A . S_{2,x} between constituent spin x of two centers (64x64)."""
    ops = spin_vector(1)
    left = [embed(s, spin_index, 6) for s in ops]
    right = [embed(s, 3 + spin_index, 6) for s in ops]
    m = np.asarray(coupling_matrix, dtype=float)
    h = np.zeros((64, 64), dtype=complex)
    for a in range(3):
        for b in range(3):
            if m[a, b] != 0.0:
                h -= m[a, b] * left[a] @ right[b]
    return h


@lru_cache(maxsize=1)
def _ring_basis():
    sx, sy, sz = spin_vector(1)
    i2 = np.eye(2)
    basis = [
        np.kron(sx, sx) + np.kron(sy, sy),
        np.kron(sz, sz),
        np.kron(sx, sy) - np.kron(sy, sx),
        np.kron(sz, i2),
        np.kron(i2, sz),
        np.eye(4),
    ]
    return np.array([b.ravel() for b in basis]).T  # 16 x 6


@dataclass(frozen=True)
class BondCouplings:
    j_perp: float = 0.0
    j_z: float = 0.0
    j_cross: float = 0.0
    h_left: float = 0.0
    h_right: float = 0.0
    e_offset: float = 0.0
    residual: float = 0.0

    def __add__(self, other: "BondCouplings") -> "BondCouplings":
        return BondCouplings(
            self.j_perp + other.j_perp,
            self.j_z + other.j_z,
            self.j_cross + other.j_cross,
            self.h_left + other.h_left,
            self.h_right + other.h_right,
            self.e_offset + other.e_offset,
            max(self.residual, other.residual),
        )

    def operator(self, include_fields: bool = True, include_offset: bool = True) -> np.ndarray:
        coeffs = np.array(
            [
                self.j_perp,
                self.j_z,
                self.j_cross,
                self.h_left if include_fields else 0.0,
                self.h_right if include_fields else 0.0,
                self.e_offset if include_offset else 0.0,
            ]
        )
        return (_ring_basis() @ coeffs).reshape(4, 4)

    def to_dict(self) -> dict:
        return {
            "j_perp": self.j_perp,
            "j_z": self.j_z,
            "j_cross": self.j_cross,
            "h_left": self.h_left,
            "h_right": self.h_right,
            "e_offset": self.e_offset,
        }


def fit_ring_couplings(op4, tol: float = RESIDUAL_TOL) -> BondCouplings:
    """Least-squares match of a 4x4 two-site operator against the ring-model basis."""
    op4 = _dense(op4)
    if op4.shape != (4, 4):
        raise ValueError("expected a 4x4 two-site operator")
    basis = _ring_basis()
    a = np.vstack([basis.real, basis.imag])
    b = np.concatenate([op4.ravel().real, op4.ravel().imag])
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.linalg.norm(a @ coef - b))
    scale = max(1.0, float(np.linalg.norm(b)))
    if residual > tol * scale:
        raise ResidualTooLarge(
            f"truncated bond operator leaves residual {residual:.3e} outside the ring basis"
        )
    return BondCouplings(*map(float, coef), residual=residual)


def extract_bond_couplings(dimer_op, twist=None, tol: float = RESIDUAL_TOL) -> BondCouplings:
    """64x64 dimer operator -> quartets (16x16) -> two-level (4x4) -> couplings.

    ``twist`` is accepted for bookkeeping symmetry with the assembly code;
    the couplings are read off the operator itself.
    """
    mat = _dense(dimer_op)
    if mat.shape != (64, 64):
        raise ValueError("dimer operator must be 64x64 (two centers of three spins)")
    if np.max(np.abs(mat - mat.conj().T)) > 1e-12:
        raise ValueError("dimer operator is not hermitian")
    return fit_ring_couplings(truncate_two_level(project_quartet(mat)), tol=tol)


def total_sz(n_sites: int, twice_s: int = 1, sparse: bool = True):
    sz = spin_matrices(twice_s)[2]
    d = twice_s + 1
    diag = np.zeros(d**n_sites)
    mloc = np.real(np.diag(sz))
    for site in range(n_sites):
        idx = (np.arange(d**n_sites) // d ** (n_sites - site - 1)) % d
        diag += mloc[idx]
    return sp.diags(diag) if sparse else np.diag(diag)
