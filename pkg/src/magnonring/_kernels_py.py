"""Pure numpy versions of the statevector kernels.

Same signatures and in-place semantics as the compiled ``_kernels`` module.
"""

import numpy as np


def apply_1q(psi, n, q, u):
    v = psi.reshape(1 << q, 2, 1 << (n - 1 - q))
    a = v[:, 0, :].copy()
    b = v[:, 1, :]
    v[:, 0, :] = u[0, 0] * a + u[0, 1] * b
    v[:, 1, :] = u[1, 0] * a + u[1, 1] * b


def apply_2q(psi, n, q1, q2, u):
    swapped = q1 > q2
    lo, hi = (q2, q1) if swapped else (q1, q2)
    v = psi.reshape(1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (n - 1 - hi))
    g = np.asarray(u).reshape(2, 2, 2, 2)
    if swapped:
        g = g.transpose(1, 0, 3, 2)
    res = np.einsum("abcd,xcydz->xaybz", g, v, optimize=True)
    v[...] = res


def hop_accumulate(psi, out, n, site_i, site_j, coef):
    for i, j, c in zip(site_i, site_j, coef):
        i, j = int(i), int(j)
        if i == j:
            continue
        half = 0.5 * c
        lo, hi = (i, j) if i < j else (j, i)
        v = psi.reshape(1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (n - 1 - hi))
        w = out.reshape(v.shape)
        # slot order is (bit_lo, bit_hi); "i down, j up" -> "i up, j down"
        if i < j:
            src_a, src_b = (slice(None), 1, slice(None), 0), (slice(None), 0, slice(None), 1)
        else:
            src_a, src_b = (slice(None), 0, slice(None), 1), (slice(None), 1, slice(None), 0)
        w[src_b] += half * v[src_a]
        w[src_a] += np.conj(half) * v[src_b]


def site_expectations(psi, n):
    splus = np.empty(n, dtype=np.complex128)
    sz = np.empty(n, dtype=np.float64)
    for q in range(n):
        v = psi.reshape(1 << q, 2, 1 << (n - 1 - q))
        up, dn = v[:, 0, :], v[:, 1, :]
        splus[q] = np.vdot(up, dn)
        sz[q] = 0.5 * (np.vdot(up, up).real - np.vdot(dn, dn).real)
    return splus, sz
