"""Magnon spectra of honeycomb chromium tri-halides from twisted spin rings.

Pipeline: lattice and twist -> quartet projection and two-level truncation ->
effective ring Hamiltonian -> exact (Krylov / dense) or compiled Trotter
dynamics with noise -> C_q(t) -> Fourier spectra and similarity scores.
"""

__version__ = "0.1.0"

from .hamiltonian import EffectiveRingModel, SizeLimit, build_model, material_preset, one_magnon_band
from .lattice import WaveVector, high_symmetry_point

__all__ = [
    "__version__",
    "EffectiveRingModel",
    "SizeLimit",
    "WaveVector",
    "build_model",
    "high_symmetry_point",
    "material_preset",
    "one_magnon_band",
]
