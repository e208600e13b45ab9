"""Two-qubit unitaries: canonical (KAK) coordinates and minimal-CZ synthesis.

Qubit 0 is the most significant tensor factor of a 4x4 matrix. The canonical
gate is Can(a, b, c) = exp(i (a XX + b YY + c ZZ)); every U(4) element equals
phase * (A1 x A2) Can(a, b, c) (B1 x B2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ZERO_TOL = 1e-9
UNITARY_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
S = np.diag([1.0, 1j])
CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)

# rows of the magic basis; XX, YY, ZZ are diagonal in it
MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=complex
) / math.sqrt(2)
_MAGIC_H = MAGIC.conj().T
# diagonal of XX, YY, ZZ and identity in the magic basis
_DIAGS = np.array(
    [np.real(np.diag(_MAGIC_H @ np.kron(p, p) @ MAGIC)) for p in (X, Y, Z)] + [np.ones(4)]
).T


class NotUnitary(ValueError):
    pass


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def ry(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def canonical_gate(a, b, c):
    # XX, YY, ZZ commute and are diagonal in the magic basis
    phases = np.exp(1j * (_DIAGS[:, :3] @ np.array([a, b, c])))
    return MAGIC @ np.diag(phases) @ _MAGIC_H


def is_unitary(u, tol=UNITARY_TOL):
    u = np.asarray(u)
    return u.shape[0] == u.shape[1] and np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=tol)


def factor_local(m, tol=1e-7):
    """Split a 4x4 tensor product into (A, B) with A x B = m."""
    r = np.asarray(m).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(r)
    if s[1] > tol * max(s[0], 1.0):
        raise ValueError(f"matrix is not a tensor product (second singular value {s[1]:.2e})")
    a = math.sqrt(s[0]) * u[:, 0].reshape(2, 2)
    b = math.sqrt(s[0]) * vh[0].reshape(2, 2)
    # balance the scalar so that A is unitary
    k = np.sqrt(np.abs(np.linalg.det(a)))
    return a / k, b * k


def _simultaneous_real_eigvecs(m2):
    re, im = m2.real, m2.imag
    rng = np.random.default_rng(20240611)
    for _ in range(32):
        x = rng.uniform(-1, 1)
        _, p = np.linalg.eigh(x * re + (1 - abs(x)) * im + 1e-3 * rng.uniform() * re)
        d = p.T @ m2 @ p
        if np.max(np.abs(d - np.diag(np.diag(d)))) < 1e-10:
            if np.linalg.det(p) < 0:
                p[:, 0] = -p[:, 0]
            return p
    raise RuntimeError("could not diagonalise the magic-basis symmetric matrix")


@dataclass(frozen=True)
class KakDecomposition:
    phase: complex
    left: np.ndarray  # 4x4 local, applied after the canonical gate
    coords: tuple
    right: np.ndarray  # 4x4 local, applied before

    def matrix(self):
        return self.phase * self.left @ canonical_gate(*self.coords) @ self.right


def kak(u) -> KakDecomposition:
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4) or not is_unitary(u):
        raise NotUnitary("expected a 4x4 unitary")
    det = np.linalg.det(u)
    g = det ** 0.25
    su = u / g
    up = _MAGIC_H @ su @ MAGIC
    m2 = up.T @ up
    p = _simultaneous_real_eigvecs(m2)
    d = np.diag(p.T @ m2 @ p)
    theta = np.angle(d) / 2.0
    k1 = up @ p @ np.diag(np.exp(-1j * theta))
    if np.linalg.det(k1).real < 0:
        theta[0] += math.pi
        k1[:, 0] = -k1[:, 0]
    # solve theta = a x + b y + c z + phi
    a, b, c, phi = np.linalg.solve(_DIAGS, theta)
    left = MAGIC @ k1.real @ _MAGIC_H
    right = MAGIC @ p.T @ _MAGIC_H
    return KakDecomposition(g * np.exp(1j * phi), left, (float(a), float(b), float(c)), right)


# local Cliffords used to move the canonical coordinates around
_XX = np.kron(X, X)
_HH = np.kron(H, H)  # XX <-> ZZ
_SS = np.kron(S, S)  # XX <-> YY
_VV = np.kron(rx(math.pi / 2), rx(math.pi / 2))  # YY <-> ZZ
_Z1 = np.kron(Z, I2)  # flips the signs of XX and YY


def _reduce(x):
    """Map x into (-pi/4, pi/4] and return (reduced, number of pi/2 shifts removed)."""
    k = math.floor((x + math.pi / 4) / (math.pi / 2))
    r = x - k * math.pi / 2
    if r <= -math.pi / 4 + ZERO_TOL:
        r += math.pi / 2
        k -= 1
    return r, k


def weyl_normal_form(dec: KakDecomposition):
    """Rewrite so that pi/4 >= a >= b >= |c|, tracking the extra local factors.

    Returns (coords, left, right, phase) with
    U = phase * left @ Can(coords) @ right.
    """
    left, right, phase = dec.left.copy(), dec.right.copy(), complex(dec.phase)
    coords = list(dec.coords)
    shift_ops = (_XX, np.kron(Y, Y), np.kron(Z, Z))
    for k in range(3):
        r, n = _reduce(coords[k])
        coords[k] = r
        # Can(..x..) = Can(..x - n pi/2..) (i P P)^n
        if n % 4:
            right = np.linalg.matrix_power(1j * shift_ops[k], n % 4) @ right

    def permute(i, j):
        nonlocal left, right
        v = {frozenset((0, 2)): _HH, frozenset((0, 1)): _SS, frozenset((1, 2)): _VV}[
            frozenset((i, j))
        ]
        # Can(old) = V Can(new) V^dagger with the slots i, j exchanged
        left = left @ v
        right = v.conj().T @ right
        coords[i], coords[j] = coords[j], coords[i]

    def flip(i, j):
        nonlocal left, right
        # conjugation by a single-qubit Pauli flips the signs of two slots
        pauli = {frozenset((0, 1)): np.kron(Z, I2), frozenset((0, 2)): np.kron(Y, I2),
                 frozenset((1, 2)): np.kron(X, I2)}[frozenset((i, j))]
        left = left @ pauli
        right = pauli @ right
        coords[i], coords[j] = -coords[i], -coords[j]

    # sort by magnitude, largest first
    for i in range(3):
        for j in range(2 - i):
            if abs(coords[j]) < abs(coords[j + 1]) - 1e-15:
                permute(j, j + 1)
    if coords[0] < 0:
        flip(0, 2)
    if coords[1] < 0:
        flip(1, 2)
    # a = pi/4 edge: (pi/4, b, c) ~ (pi/4, b, -c); prefer c >= 0
    if abs(coords[0] - math.pi / 4) < ZERO_TOL and coords[2] < -ZERO_TOL:
        coords[0] -= math.pi / 2
        right = (1j * _XX) @ right
        flip(0, 2)
    return tuple(coords), left, right, phase


def cz_count_for(coords, tol=ZERO_TOL) -> int:
    a, b, c = (abs(x) for x in coords)
    zeros = sum(x < tol for x in (a, b, c))
    if zeros == 3:
        return 0
    if zeros == 2 and abs(max(a, b, c) - math.pi / 4) < tol:
        return 1
    if zeros >= 1:
        return 2
    return 3


def _cx12():
    return np.kron(I2, H) @ CZ @ np.kron(I2, H)


def _template(coords, n_cz):
    """Local 4x4 layers [L0, L1, ..., Ln] with Can(coords) = ph * Ln CZ ... CZ L0."""
    a, b, c = coords
    hh = np.kron(I2, H)
    if n_cz == 0:
        return [np.eye(4, dtype=complex)], 1.0
    if n_cz == 1:
        # (pi/4, 0, 0) = HH (0, 0, pi/4) HH;  Can(0,0,pi/4) = e^{-i pi/4} CZ (e^{i pi/4 Z} x e^{i pi/4 Z})
        zz = np.kron(rz(-math.pi / 2), rz(-math.pi / 2))
        return [zz @ _HH, _HH], np.exp(-0.25j * math.pi)
    if n_cz == 2:
        # Can(a, b, 0) = VV Can(a, 0, b) VV^dag; Can(a, 0, b) = CX12 exp(i(a X1 + b Z2)) CX12
        mid = np.kron(rx(-2 * a), rz(-2 * b))
        return [hh @ _VV.conj().T, hh @ mid @ hh, _VV @ hh], 1.0
    # three CZ via CX21 . (.) . CX12 . (.) . CX21
    h1 = np.kron(H, I2)
    l0 = h1 @ np.kron(rz(-math.pi / 2), I2)
    l1 = hh @ np.kron(I2, ry(math.pi / 2 - 2 * b)) @ h1
    l2 = h1 @ np.kron(rz(math.pi / 2 - 2 * c), ry(2 * a - math.pi / 2)) @ hh
    l3 = np.kron(I2, rz(math.pi / 2)) @ h1
    return [l0, l1, l2, l3], np.exp(0.25j * math.pi)


@dataclass(frozen=True)
class TwoQubitSynthesis:
    """U = phase * L_k CZ L_{k-1} CZ ... CZ L_0 with each L_i = A_i x B_i."""

    n_cz: int
    layers: tuple  # ((A_0, B_0), ..., (A_k, B_k)) in time order
    phase: complex
    coords: tuple
    fidelity: float = field(default=1.0)

    def matrix(self):
        m = np.kron(*self.layers[0])
        for a, b in self.layers[1:]:
            m = np.kron(a, b) @ CZ @ m
        return self.phase * m


def decompose_two_qubit(u, tol=ZERO_TOL) -> TwoQubitSynthesis:
    """Minimal-CZ synthesis from the canonical class of u."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4) or not is_unitary(u):
        raise NotUnitary("decompose_two_qubit needs a 4x4 unitary")
    coords, left, right, phase = weyl_normal_form(kak(u))
    n = cz_count_for(coords, tol)
    if n == 1:
        coords = (math.pi / 4, 0.0, 0.0)
    elif n == 2:
        coords = (coords[0], coords[1], 0.0)
    elif n == 0:
        coords = (0.0, 0.0, 0.0)
    layers, ph = _template(coords, n)
    layers = list(layers)
    layers[0] = layers[0] @ right
    layers[-1] = left @ layers[-1]
    factored = [factor_local(m) for m in layers]
    out = TwoQubitSynthesis(n, tuple(factored), 1.0, coords)
    rebuilt = out.matrix()
    ov = np.trace(rebuilt.conj().T @ u) / 4.0
    fid = float(abs(ov))
    return TwoQubitSynthesis(n, tuple(factored), ov / abs(ov) if abs(ov) > 0 else 1.0, coords, fid)
