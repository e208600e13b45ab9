"""Compiled vs pure-Python kernel timings.

Usage: python3 bench/bench_kernels.py [--sizes 12 16 18] [--repeat 5]
Prints one CSV row per (kernel, backend, N) with the median time in ms.
"""

import argparse
import timeit

import numpy as np

from magnonring import kernels
from magnonring.hamiltonian import RingOperator, build_model
from magnonring.twoqubit import CZ, H


def _state(n, seed=0):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return psi / np.linalg.norm(psi)


def cases(n):
    psi = _state(n)
    out = np.empty_like(psi)
    u2 = np.kron(H, H) @ CZ
    op = RingOperator(build_model("CrBr3", "K", n_cells=n // 2))
    return {
        "apply_1q": lambda: kernels.apply_1q(psi, n, n // 2, H),
        "apply_2q": lambda: kernels.apply_2q(psi, n, 1, n - 2, u2),
        "ring_matvec": lambda: op.apply(psi, out=out),
        "site_expectations": lambda: kernels.site_expectations(psi, n),
    }


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--sizes", type=int, nargs="+", default=[12, 16, 18])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    backends = ["python"] + (["cython"] if kernels.compiled_available() else [])
    print("kernel,backend,n_sites,median_ms")
    rows = {}
    for n in args.sizes:
        for backend in backends:
            kernels.use_backend(backend)
            for name, fn in cases(n).items():
                fn()
                t = np.median(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
                rows[(name, backend, n)] = t
                print(f"{name},{backend},{n},{t:.3f}")
    if "cython" in backends:
        print("# speedup cython over python")
        for n in args.sizes:
            for name in cases(min(n, 4)):
                print(f"# {name} N={n}: {rows[(name, 'python', n)] / rows[(name, 'cython', n)]:.2f}x")
    kernels.use_backend(backends[-1])


if __name__ == "__main__":
    main()
