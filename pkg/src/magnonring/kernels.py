"""Kernel backend selection.

The compiled Cython module is used when it was built; otherwise the numpy
implementations take over. Setting ``MAGNONRING_PURE_PYTHON=1`` forces the
fallback, which is how the benchmark and the parity tests reach it.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MAGNONRING_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
    else:
        _impl = _compiled
        BACKEND = "cython"
else:
    _compiled = None


def compiled_available():
    return _compiled is not None


def use_backend(name):
    """Switch the active backend at runtime ('cython' or 'python')."""
    global _impl, BACKEND
    if name == "cython":
        if _compiled is None:
            try:
                from . import _kernels as mod
            except ImportError as exc:
                raise RuntimeError("compiled kernels are not built") from exc
            _impl = mod
        else:
            _impl = _compiled
    elif name == "python":
        _impl = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def _c(m):
    return np.ascontiguousarray(m, dtype=np.complex128)


def apply_1q(psi, n, q, u):
    _impl.apply_1q(psi, n, q, _c(u))


def apply_2q(psi, n, q1, q2, u):
    _impl.apply_2q(psi, n, q1, q2, _c(u))


def hop_accumulate(psi, out, n, site_i, site_j, coef):
    _impl.hop_accumulate(
        psi,
        out,
        n,
        np.ascontiguousarray(site_i, dtype=np.int64),
        np.ascontiguousarray(site_j, dtype=np.int64),
        _c(coef),
    )


def site_expectations(psi, n):
    return _impl.site_expectations(psi, n)
