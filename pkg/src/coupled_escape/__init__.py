"""Noise-induced escape of two coupled fields on a finite interval.

The package computes activation barriers, Kramers rate prefactors and
Langevin first-passage times for the energy

    H = int [ |phi1'|^2/2 + |phi2'|^2/2 + U(phi1, phi2) ] dz,
    U = -mu1 phi1^2/2 + phi1^4/4 - mu2 phi2^2/2 + phi2^4/4 + phi1^2 phi2^2/2,

with Neumann ends at ``z = +-L/2`` and ``mu1 > mu2 > 0``.
"""

__version__ = "0.1.0"

from .elliptic import complete_e, complete_k, jacobi
from .errors import (ConvergenceError, DomainError, EscapeError, InstabilityError,
                     InsufficientSamplingError, NumericalOverflowError, SingularityError,
                     ValidityError)
from .forman import (det_ratio, escape_rate, fit_critical_exponent, integrate_fundamental,
                     negative_eigenvalue, prefactor)
from .langevin import (LatticeConfig, arrhenius_scan, escape_statistics, first_passage,
                       fit_arrhenius)
from .model import (FieldPair, Instanton, ModelParams, barrier, critical_length, energy,
                    euler_lagrange_residual, m_from_length)
from .spectra import kramers_rate, prefactor_below, spectrum_uniform

__all__ = [
    "ConvergenceError", "DomainError", "EscapeError", "FieldPair", "InstabilityError",
    "Instanton", "InsufficientSamplingError", "LatticeConfig", "ModelParams",
    "NumericalOverflowError", "SingularityError", "ValidityError", "arrhenius_scan",
    "barrier", "complete_e", "complete_k", "critical_length", "det_ratio", "energy",
    "escape_rate", "escape_statistics", "euler_lagrange_residual", "first_passage",
    "fit_arrhenius", "fit_critical_exponent", "integrate_fundamental", "jacobi",
    "kramers_rate", "m_from_length", "negative_eigenvalue", "prefactor", "prefactor_below",
    "spectrum_uniform",
]
