"""Anisotropic MHD near a background magnetic field: mode kernels, linear decay, a periodic solver and inequality checks."""

from .kernel import (
    DomainTag,
    KernelTriple,
    PhysicalParams,
    Wavevector,
    check_bounds,
    classify_frequency,
    eigen_data,
    kernel_triple,
    matrix_exponential_oracle,
    propagator_scalars,
)
from .propagator import AnalyticSpectrum, DecaySeries, QuadratureGrid, decay_exponent_fit, evolve_linear
from .solver import Grid, SpectralState

__version__ = "0.1.0"
