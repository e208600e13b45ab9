# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled statevector kernels.

Qubit 0 is the most significant bit of the basis index. All routines work
in place on a contiguous complex128 vector of length 2**n.
"""

import numpy as np
cimport numpy as cnp

ctypedef double complex cplx


cdef inline Py_ssize_t _insert_zero(Py_ssize_t k, int bit) nogil:
    cdef Py_ssize_t low = k & ((<Py_ssize_t>1 << bit) - 1)
    return ((k >> bit) << (bit + 1)) | low


def apply_1q(cplx[::1] psi, int n, int q, cplx[:, ::1] u):
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t stride = <Py_ssize_t>1 << (n - 1 - q)
    cdef Py_ssize_t i, j
    cdef cplx a, b
    cdef cplx u00 = u[0, 0], u01 = u[0, 1], u10 = u[1, 0], u11 = u[1, 1]
    with nogil:
        i = 0
        while i < dim:
            for j in range(i, i + stride):
                a = psi[j]
                b = psi[j + stride]
                psi[j] = u00 * a + u01 * b
                psi[j + stride] = u10 * a + u11 * b
            i += 2 * stride


def apply_2q(cplx[::1] psi, int n, int q1, int q2, cplx[:, ::1] u):
    """Apply a 4x4 unitary on (q1, q2); row index of u is 2*bit(q1) + bit(q2)."""
    cdef Py_ssize_t dim = psi.shape[0]
    cdef int b1 = n - 1 - q1
    cdef int b2 = n - 1 - q2
    cdef int lo = b1 if b1 < b2 else b2
    cdef int hi = b2 if b1 < b2 else b1
    cdef Py_ssize_t m1 = <Py_ssize_t>1 << b1
    cdef Py_ssize_t m2 = <Py_ssize_t>1 << b2
    cdef Py_ssize_t k, base, i00, i01, i10, i11
    cdef cplx v0, v1, v2, v3
    cdef cplx[4][4] w
    cdef int r, c
    for r in range(4):
        for c in range(4):
            w[r][c] = u[r, c]
    with nogil:
        for k in range(dim >> 2):
            base = _insert_zero(_insert_zero(k, lo), hi)
            i00 = base
            i01 = base | m2
            i10 = base | m1
            i11 = base | m1 | m2
            v0 = psi[i00]
            v1 = psi[i01]
            v2 = psi[i10]
            v3 = psi[i11]
            psi[i00] = w[0][0] * v0 + w[0][1] * v1 + w[0][2] * v2 + w[0][3] * v3
            psi[i01] = w[1][0] * v0 + w[1][1] * v1 + w[1][2] * v2 + w[1][3] * v3
            psi[i10] = w[2][0] * v0 + w[2][1] * v1 + w[2][2] * v2 + w[2][3] * v3
            psi[i11] = w[3][0] * v0 + w[3][1] * v1 + w[3][2] * v2 + w[3][3] * v3


def hop_accumulate(cplx[::1] psi, cplx[::1] out, int n,
                   long[::1] site_i, long[::1] site_j, cplx[::1] coef):
    """out += sum_b coef_b/2 * S+_i S-_j psi + h.c. for every bond b = (i, j)."""
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t nb = site_i.shape[0]
    cdef Py_ssize_t b, k, base, ia, ib
    cdef int bi, bj, lo, hi
    cdef Py_ssize_t mi, mj
    cdef cplx c, cc
    with nogil:
        for b in range(nb):
            bi = n - 1 - <int>site_i[b]
            bj = n - 1 - <int>site_j[b]
            if bi == bj:
                continue
            lo = bi if bi < bj else bj
            hi = bj if bi < bj else bi
            mi = <Py_ssize_t>1 << bi
            mj = <Py_ssize_t>1 << bj
            c = 0.5 * coef[b]
            cc = c.conjugate()
            for k in range(dim >> 2):
                base = _insert_zero(_insert_zero(k, lo), hi)
                ia = base | mi
                ib = base | mj
                out[ib] += c * psi[ia]
                out[ia] += cc * psi[ib]


def site_expectations(cplx[::1] psi, int n):
    """Return (<S+_j>, <Sz_j>) for spin-1/2 operators, |0> = spin up."""
    cdef Py_ssize_t dim = psi.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] splus = np.zeros(n, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sz = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t k, base, m
    cdef int q, bit
    cdef cplx acc
    cdef double zacc, p0, p1
    for q in range(n):
        bit = n - 1 - q
        m = <Py_ssize_t>1 << bit
        acc = 0
        zacc = 0.0
        with nogil:
            for k in range(dim >> 1):
                base = _insert_zero(k, bit)
                acc = acc + psi[base].conjugate() * psi[base | m]
                p0 = psi[base].real * psi[base].real + psi[base].imag * psi[base].imag
                p1 = psi[base | m].real * psi[base | m].real + psi[base | m].imag * psi[base | m].imag
                zacc = zacc + p0 - p1
        splus[q] = acc
        sz[q] = 0.5 * zacc
    return splus, sz
