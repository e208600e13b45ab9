"""Exact classical baselines: Lanczos-Krylov propagation and a dense sector oracle."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels
from .hamiltonian import (
    EffectiveRingModel,
    RingOperator,
    SizeLimit,
    magnetization_sectors,
    sparse_hamiltonian,
)

NORM_TOL = 1e-10


class NonConvergence(RuntimeError):
    """Krylov sub-stepping hit its floor without meeting the error tolerance."""


class MemoryBudget(SizeLimit):
    """State vectors plus Krylov basis would exceed the memory budget."""


# --------------------------------------------------------------------------
# states


def fm_state(n: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1.0
    return psi


def product_state(single_qubit_states) -> np.ndarray:
    """Tensor product of 2-component amplitude vectors, qubit 0 first."""
    psi = np.ones(1, dtype=complex)
    for s in single_qubit_states:
        psi = np.kron(psi, np.asarray(s, dtype=complex))
    return psi


def rx_column(angle: float) -> np.ndarray:
    """RX(angle)|0> with RX = exp(-i angle X / 2)."""
    return np.array([math.cos(angle / 2), -1j * math.sin(angle / 2)])


def quench_state(n: int, angle: float = 0.3 * math.pi, n_rotated=None) -> np.ndarray:
    """RX(angle) on qubits 0..N/2-1 of |0...0>."""
    if n % 2:
        raise ValueError("quench needs an even number of sites")
    k = n // 2 if n_rotated is None else int(n_rotated)
    cols = [rx_column(angle) if q < k else np.array([1.0, 0.0]) for q in range(n)]
    return product_state(cols)


@dataclass(frozen=True)
class EvolutionRequest:
    model: EffectiveRingModel
    initial_state: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    centered: bool = True

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0 or t[0] != 0.0:
            raise ValueError("times must be a 1D grid starting at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        psi = np.asarray(self.initial_state)
        if psi.shape != (1 << self.model.n_sites,):
            raise ValueError("initial state has the wrong dimension")
        if abs(np.linalg.norm(psi) - 1.0) > NORM_TOL:
            raise ValueError("initial state is not normalized")

    @classmethod
    def uniform(cls, model, initial_state, tau, n_steps, centered=True):
        return cls(model, initial_state, tau * np.arange(n_steps + 1), centered)


# --------------------------------------------------------------------------
# observable tables


@dataclass
class ObservableTable:
    times: np.ndarray
    sx: np.ndarray  # (n_times, N)
    sy: np.ndarray
    sz: np.ndarray
    source: str = ""
    wall_time: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        return self.sx.shape[1]

    @property
    def splus(self) -> np.ndarray:
        return self.sx + 1j * self.sy

    @property
    def sminus(self) -> np.ndarray:
        return self.sx - 1j * self.sy

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "site", "Sx", "Sy", "Sz"])
        for k, t in enumerate(self.times):
            for j in range(self.n_sites):
                w.writerow([repr(float(t)), j, repr(float(self.sx[k, j])),
                            repr(float(self.sy[k, j])), repr(float(self.sz[k, j]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text, source="csv") -> "ObservableTable":
        if "\n" in str(path_or_text):
            rows = list(csv.DictReader(io.StringIO(path_or_text)))
        else:
            with open(path_or_text) as fh:
                rows = list(csv.DictReader(fh))
        times = sorted({float(r["t"]) for r in rows})
        n = max(int(r["site"]) for r in rows) + 1
        tindex = {t: k for k, t in enumerate(times)}
        arr = np.zeros((3, len(times), n))
        for r in rows:
            k, j = tindex[float(r["t"])], int(r["site"])
            arr[:, k, j] = float(r["Sx"]), float(r["Sy"]), float(r["Sz"])
        return cls(np.array(times), arr[0], arr[1], arr[2], source)


def measure_sites(psi: np.ndarray, n: int):
    splus, sz = kernels.site_expectations(np.ascontiguousarray(psi), n)
    return splus.real.copy(), splus.imag.copy(), np.asarray(sz).copy()


# --------------------------------------------------------------------------
# Krylov


def _small_expm(alphas, betas, dt):
    k = alphas.size
    t = np.diag(alphas) + np.diag(betas[: k - 1], 1) + np.diag(betas[: k - 1], -1)
    return sla.expm(-1j * dt * t)[:, 0]


def _lanczos_expm(op, v, dt, m, tol, check_every=3, min_dim=6):
    """Lanczos basis grown until the a-posteriori error for exp(-i H dt) v is below tol.

    Returns (basis, alphas, betas, beta0, happy). The error estimate is
    beta0 * beta_k * |[exp(-i dt T_k)]_{k,1}|.
    """
    beta0 = np.linalg.norm(v)
    basis = np.empty((m + 1, v.size), dtype=complex)
    basis[0] = v / beta0
    alphas, betas = [], []
    w = np.empty_like(v)
    scale = 0.0
    for k in range(m):
        op.apply(basis[k], out=w)
        a = float(np.vdot(basis[k], w).real)
        w -= a * basis[k]
        if k > 0:
            w -= betas[-1] * basis[k - 1]
        # full reorthogonalisation keeps the basis orthonormal at 1e-15
        coeff = (basis[: k + 1] @ w.conj()).conj()
        w -= coeff @ basis[: k + 1]
        b = float(np.linalg.norm(w))
        alphas.append(a)
        betas.append(b)
        scale = max(scale, abs(a), b)
        if b <= 1e-13 * max(scale, 1.0):
            return basis[: k + 1], np.array(alphas), np.array(betas), beta0, True
        basis[k + 1] = w / b
        if k + 1 >= min_dim and (k + 1) % check_every == 0 and k + 1 < m:
            c = _small_expm(np.array(alphas), np.array(betas), dt)
            if beta0 * b * abs(c[-1]) <= tol:
                return basis[: k + 1], np.array(alphas), np.array(betas), beta0, False
    return basis[:m], np.array(alphas), np.array(betas), beta0, False


def krylov_step(op, psi, dt, krylov_dim=30, tol=1e-9, min_fraction=2.0**-40):
    """Advance psi by dt (either sign) with sub-steps; returns (psi, n_substeps, max_err_estimate)."""
    sign = -1.0 if dt < 0 else 1.0
    span = abs(float(dt))
    remaining = span
    substeps = 0
    max_err = 0.0
    while remaining > 0.0:
        basis, alphas, betas, beta0, happy = _lanczos_expm(op, psi, sign * remaining, krylov_dim, tol)
        h = remaining
        while True:
            coeffs = _small_expm(alphas, betas, sign * h)
            err = 0.0 if happy else beta0 * betas[-1] * abs(coeffs[-1])
            if err <= tol:
                break
            h *= 0.5
            if h < min_fraction * span:
                raise NonConvergence(
                    f"Krylov sub-step fell below {min_fraction:g} of dt with error {err:.3e}"
                )
        psi = beta0 * (coeffs @ basis)
        # renormalise to strip the accumulated rounding drift
        psi /= np.linalg.norm(psi)
        max_err = max(max_err, err)
        remaining -= h
        if remaining < 1e-15 * span:
            remaining = 0.0
        substeps += 1
    return psi, substeps, max_err


def _check_budget(n, krylov_dim, max_sites, budget_bytes):
    if n > max_sites:
        raise MemoryBudget(f"N={n} exceeds the Krylov guard max_sites={max_sites}")
    need = (krylov_dim + 5) * (16 << n)
    if budget_bytes is not None and need > budget_bytes:
        raise MemoryBudget(f"Krylov run needs ~{need / 2**30:.1f} GiB > budget")


def krylov_evolve(
    req: EvolutionRequest,
    krylov_dim: int = 30,
    tol: float = 1e-9,
    max_sites: int = 20,
    budget_bytes: int | None = 4 << 30,
    keep_states: bool = False,
) -> ObservableTable:
    """Propagate with the matrix-free H' and record per-site spin expectations."""
    model = req.model
    n = model.n_sites
    _check_budget(n, krylov_dim, max_sites, budget_bytes)
    t0 = time.perf_counter()
    op = RingOperator(model, centered=req.centered)
    psi = np.array(req.initial_state, dtype=complex)
    times = np.asarray(req.times, dtype=float)
    sx = np.zeros((times.size, n))
    sy = np.zeros_like(sx)
    sz = np.zeros_like(sx)
    states = []
    energies, norms = [], []
    substeps_total, max_err = 0, 0.0
    for k, t in enumerate(times):
        if k > 0:
            psi, nsub, err = krylov_step(op, psi, t - times[k - 1], krylov_dim, tol)
            substeps_total += nsub
            max_err = max(max_err, err)
        sx[k], sy[k], sz[k] = measure_sites(psi, n)
        norms.append(float(np.linalg.norm(psi)))
        energies.append(op.expectation(psi))
        if keep_states:
            states.append(psi.copy())
    wall = time.perf_counter() - t0
    stats = {
        "krylov_dim": krylov_dim,
        "tol": tol,
        "substeps": substeps_total,
        "matvecs": op.matvec_count,
        "max_error_estimate": max_err,
        "energy_drift": float(np.max(np.abs(np.array(energies) - energies[0]))),
        "norm_drift": float(np.max(np.abs(np.array(norms) - 1.0))),
        "backend": kernels.BACKEND,
    }
    if keep_states:
        stats["states"] = states
    return ObservableTable(times, sx, sy, sz, "krylov", wall, stats)


# --------------------------------------------------------------------------
# dense oracle


class SectorPropagator:
    """exp(-i H t) via eigendecomposition of every fixed-magnetization block."""

    def __init__(self, model: EffectiveRingModel, centered=True, max_sites=12):
        n = model.n_sites
        if n > max_sites:
            raise SizeLimit(f"dense oracle limited to N <= {max_sites}")
        self.n = n
        h = sparse_hamiltonian(model, centered=centered).tocsr()
        self.blocks = []
        for k, idx in magnetization_sectors(n).items():
            sub = h[idx][:, idx].toarray()
            evals, evecs = np.linalg.eigh(sub)
            self.blocks.append((idx, evals, evecs))

    def apply(self, psi, t):
        out = np.zeros_like(psi, dtype=complex)
        for idx, evals, evecs in self.blocks:
            c = evecs.conj().T @ psi[idx]
            out[idx] = evecs @ (np.exp(-1j * evals * t) * c)
        return out

    def eigenvalues(self):
        return np.sort(np.concatenate([b[1] for b in self.blocks]))


def dense_evolve(req: EvolutionRequest, max_sites: int = 12, keep_states=False) -> ObservableTable:
    t0 = time.perf_counter()
    prop = SectorPropagator(req.model, req.centered, max_sites)
    n = req.model.n_sites
    psi0 = np.asarray(req.initial_state, dtype=complex)
    times = np.asarray(req.times, dtype=float)
    sx = np.zeros((times.size, n))
    sy = np.zeros_like(sx)
    sz = np.zeros_like(sx)
    states = []
    for k, t in enumerate(times):
        psi = prop.apply(psi0, t)
        sx[k], sy[k], sz[k] = measure_sites(psi, n)
        if keep_states:
            states.append(psi)
    stats = {"states": states} if keep_states else {}
    return ObservableTable(times, sx, sy, sz, "dense", time.perf_counter() - t0, stats)
