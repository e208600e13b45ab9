"""Spin-wave signal C_q(t), its Fourier spectrum, bootstrap bands and similarity scoring.

Frequency convention: a trace exp(-i w0 t) peaks at +w0, i.e. the transform is
F(w) = sum_t C(t) exp(+i w t) on the two-sided grid w_k = 2 pi k / (n_pad tau).
Reported frequencies are shifted by -alpha so that a trace recorded under the
centered Hamiltonian H' = H - alpha S^z_tot lands on the uncentered energies.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

WINDOWS = ("none", "gaussian")
GAUSSIAN_WIDTH = 0.5  # sigma as a fraction of the trace length T_max
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class MissingInitialRow(ValueError):
    pass


class ZeroSpectrum(ValueError):
    pass


@dataclass
class TimeTrace:
    times: np.ndarray
    c_values: np.ndarray
    per_site: np.ndarray | None = None  # S^+_j(t), shape (n_times, N)
    source: str = ""
    alpha: float = 0.0  # frequency shift; 0 for traces of the uncentered Hamiltonian

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.c_values = np.asarray(self.c_values, dtype=complex)
        if self.times.shape != self.c_values.shape:
            raise ValueError("times and values differ in length")
        if not np.all(np.isfinite(self.c_values)):
            raise ValueError("trace contains non-finite values")
        if self.times.size > 1:
            d = np.diff(self.times)
            if np.any(np.abs(d - d[0]) > 1e-9 * max(1.0, abs(d[0]))):
                raise ValueError("trace times must be uniformly spaced")

    @property
    def tau(self):
        return float(self.times[1] - self.times[0])

    @property
    def t_max(self):
        return float(self.times[-1] - self.times[0])

    def damped(self, gamma):
        return TimeTrace(self.times, self.c_values * np.exp(-gamma * (self.times - self.times[0])),
                         None, self.source, self.alpha)


def assemble_signal(splus, times=None, source="", alpha=0.0) -> TimeTrace:
    """C(t) = -i/N sum_j S^-_j(0) S^+_j(t) from per-site expectation values.

    ``splus`` is an (n_times, N) complex array or any table exposing
    ``.splus`` and ``.times`` (row 0 must be t = 0).
    """
    if hasattr(splus, "splus"):
        times = splus.times if times is None else times
        source = source or getattr(splus, "source", "")
        splus = splus.splus
    splus = np.asarray(splus, dtype=complex)
    times = np.asarray(times, dtype=float)
    if splus.ndim != 2 or splus.shape[0] == 0 or times.size == 0 or times[0] != 0.0:
        raise MissingInitialRow("the t = 0 row of S^+ is required")
    n = splus.shape[1]
    sminus0 = np.conj(splus[0])
    c = -1j / n * (splus @ sminus0)
    return TimeTrace(times, c, splus, source, alpha)


@dataclass
class Spectrum:
    omega: np.ndarray
    magnitude: np.ndarray
    band_lo: np.ndarray | None = None
    band_hi: np.ndarray | None = None
    window: str = "none"
    zero_pad: int = 8
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.magnitude = np.asarray(self.magnitude, dtype=float)
        if np.any(np.diff(self.omega) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if np.any(self.magnitude < 0):
            raise ValueError("magnitudes must be non-negative")

    @property
    def bin_width(self):
        return float(self.omega[1] - self.omega[0])

    def peaks(self, rel_height=0.4):
        """Local maxima at least rel_height * max, strongest first: [(omega, relative height)]."""
        mag = self.magnitude
        top = mag.max()
        if top <= 0:
            return []
        # pad so maxima at the grid ends are also candidates
        padded = np.concatenate([[0.0], mag, [0.0]])
        idx, _ = find_peaks(padded, height=rel_height * top)
        idx = idx - 1
        order = np.argsort(-mag[idx], kind="stable")
        return [(float(self.omega[i]), float(mag[i] / top)) for i in idx[order]]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["omega", "magnitude", "band_lo", "band_hi"])
        lo = self.band_lo if self.band_lo is not None else [float("nan")] * self.omega.size
        hi = self.band_hi if self.band_hi is not None else [float("nan")] * self.omega.size
        for row in zip(self.omega, self.magnitude, lo, hi):
            w.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text, **kw):
        text = path_or_text if "\n" in str(path_or_text) else open(path_or_text).read()
        rows = list(csv.DictReader(io.StringIO(text)))
        col = lambda k: np.array([float(r[k]) for r in rows])
        lo, hi = col("band_lo"), col("band_hi")
        return cls(col("omega"), col("magnitude"),
                   None if np.all(np.isnan(lo)) else lo, None if np.all(np.isnan(hi)) else hi, **kw)


def window_values(n, kind):
    if kind == "none":
        return np.ones(n)
    if kind == "gaussian":
        x = np.arange(n) / max(n - 1, 1)
        return np.exp(-0.5 * (x / GAUSSIAN_WIDTH) ** 2)
    raise ValueError(f"window must be one of {WINDOWS}")


def _transform(c, tau, zero_pad, window):
    n = c.size
    n_pad = int(zero_pad) * n
    # n_pad * ifft is sum_t c_t exp(+i w_k t)
    f = n_pad * np.fft.ifft(c * window_values(n, window), n_pad)
    omega = 2.0 * np.pi * np.fft.fftfreq(n_pad, tau)
    order = np.argsort(omega, kind="stable")
    return omega[order], f[order], n_pad


def fourier(trace: TimeTrace, zero_pad: int = 8, window: str = "none", shift_alpha: bool = True) -> Spectrum:
    if trace.c_values.size < 2:
        raise ValueError("need at least two samples")
    if zero_pad < 1:
        raise ValueError("zero_pad must be >= 1")
    omega, f, n_pad = _transform(trace.c_values, trace.tau, zero_pad, window)
    shift = -trace.alpha if shift_alpha else 0.0
    return Spectrum(omega + shift, np.abs(f), None, None, window, int(zero_pad),
                    {"n_samples": int(trace.c_values.size), "n_pad": n_pad, "tau": trace.tau,
                     "alpha_shift": shift, "source": trace.source,
                     "convention": "F(w) = sum_t C(t) exp(+i w t)"})


# --------------------------------------------------------------------------
# bootstrap


def _cell_means(batches, calibration, rng, n_resamples):
    """Per (time, basis): resampled TREX-corrected per-qubit means, shape (R, N)."""
    from collections import defaultdict

    groups = defaultdict(list)
    for b in batches:
        groups[(b.time_index, b.basis)].append(b)
    out = {}
    for key, cell_batches in groups.items():
        total = None
        count = 0
        for b in cell_batches:
            d = b.decoded()
            s = d.shape[0]
            if rng is None:
                sums = np.broadcast_to(d.sum(axis=0), (n_resamples, d.shape[1]))
            else:
                # resample shots within the (time, basis, twirl) cell
                w = rng.multinomial(s, np.full(s, 1.0 / s), size=n_resamples)
                sums = w @ d
            total = sums if total is None else total + sums
            count += s
        means = total / count
        if calibration is not None:
            means = means / calibration.factors
        out[key] = means
    return out


def bootstrap_band(batches, tau, alpha=0.0, calibration=None, n_resamples=200, seed=0,
                   zero_pad=8, window="none", percentiles=(16.0, 84.0)):
    """Percentile band of the spectrum under shot resampling within each cell.

    ``batches`` is an iterable of ShotBatch carrying time_index and basis X / Y.
    Returns (spectrum_of_full_data_with_band, magnitudes of every resample).
    """
    batches = list(batches)
    rng = np.random.default_rng(seed)
    means = _cell_means(batches, calibration, rng, n_resamples)
    full = _cell_means(batches, calibration, None, 1)
    n_times = 1 + max(k[0] for k in means)
    times = tau * np.arange(n_times)

    def spectra_of(m, r):
        splus = np.stack([0.5 * (m[(k, "X")][r] + 1j * m[(k, "Y")][r]) for k in range(n_times)])
        return fourier(assemble_signal(splus, times, alpha=alpha), zero_pad, window)

    base = spectra_of(full, 0)
    mags = np.stack([spectra_of(means, r).magnitude for r in range(n_resamples)])
    lo, hi = np.percentile(mags, percentiles, axis=0)
    base.band_lo, base.band_hi = lo, hi
    base.meta.update({"bootstrap_resamples": n_resamples, "percentiles": list(percentiles), "seed": seed})
    return base, mags


# --------------------------------------------------------------------------
# similarity and damping


def cosine_similarity(a: Spectrum, b: Spectrum, n_grid: int = 512) -> float:
    """Normalized Riemann-sum inner product on a uniform grid over the union of supports."""
    lo = min(a.omega[0], b.omega[0])
    hi = max(a.omega[-1], b.omega[-1])
    grid = np.linspace(lo, hi, n_grid)
    fa = np.interp(grid, a.omega, a.magnitude, left=0.0, right=0.0)
    fb = np.interp(grid, b.omega, b.magnitude, left=0.0, right=0.0)
    na, nb = math.sqrt(float(fa @ fa)), math.sqrt(float(fb @ fb))
    if na == 0 or nb == 0:
        raise ZeroSpectrum("cosine similarity of a zero spectrum")
    return float(fa @ fb) / (na * nb)


@dataclass
class SimilarityReport:
    cosine: float
    gamma: float
    gamma_max: float
    at_boundary: bool
    n_grid: int = 512
    evaluations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def mismatch(self):
        return min(2.0, max(0.0, 1.0 - self.cosine))

    def to_dict(self):
        return {"cosine": self.cosine, "mismatch": self.mismatch, "gamma": self.gamma,
                "gamma_max": self.gamma_max, "at_boundary": self.at_boundary, "n_grid": self.n_grid,
                "evaluations": self.evaluations, **self.meta}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def fit_damping(reference: TimeTrace, target: Spectrum, n_grid: int = 512, n_coarse: int = 41,
                rel_tol: float = 1e-4, gamma_max: float | None = None) -> SimilarityReport:
    """Exponential envelope exp(-gamma t) on the reference maximizing cosine similarity to target.

    The target spectrum is never modified.
    """
    gmax = 4.0 / reference.t_max if gamma_max is None else float(gamma_max)
    cache = {}

    def score(g):
        if g not in cache:
            s = fourier(reference.damped(g), target.zero_pad, target.window)
            cache[g] = cosine_similarity(s, target, n_grid)
        return cache[g]

    grid = np.linspace(0.0, gmax, n_coarse)
    vals = [score(float(g)) for g in grid]
    k = int(np.argmax(vals))
    a = float(grid[max(k - 1, 0)])
    b = float(grid[min(k + 1, n_coarse - 1)])
    # golden-section refinement inside the bracketing coarse cells
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    while b - a > rel_tol * max(abs(grid[k]), gmax * 1e-3):
        if score(x1) >= score(x2):
            b, x2 = x2, x1
            x1 = b - GOLDEN * (b - a)
        else:
            a, x1 = x1, x2
            x2 = a + GOLDEN * (b - a)
    cand = [(score(x), x) for x in (a, b, 0.5 * (a + b), float(grid[k]), 0.0)]
    top = max(v for v, _ in cand)
    # a flat optimum (to rounding) resolves toward the least damping
    best_g = min(x for v, x in cand if v >= top - 1e-13)
    best_val = score(best_g)
    span = gmax / (n_coarse - 1)
    at_boundary = best_g <= rel_tol * span or best_g >= gmax - rel_tol * span
    return SimilarityReport(best_val, best_g, gmax, bool(at_boundary), n_grid, len(cache),
                            {"target_source": target.meta.get("source", "")})
