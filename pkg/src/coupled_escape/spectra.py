"""Fluctuation spectra about the uniform states and the short-interval rate.

Below the critical length both the metastable state and the transition
state are uniform, so the linearized operators are diagonal with constant
coefficients and their Neumann spectra are known in closed form
(cosine modes ``cos(pi n (z + L/2) / L)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

from .errors import DomainError
from .model import ModelParams, critical_length

Branch = Literal["field1", "field2"]


class Eigenvalue(NamedTuple):
    value: float
    branch: Branch
    index: int


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of a uniform-state operator, sorted by value."""

    eigenvalues: tuple[Eigenvalue, ...]
    operator_kind: Literal["stable", "saddle"]

    @property
    def values(self) -> list[float]:
        return [e.value for e in self.eigenvalues]

    @property
    def negative_count(self) -> int:
        return sum(1 for e in self.eigenvalues if e.value < 0.0)

    def branch(self, name: Branch) -> list[float]:
        """Values of one branch in mode-index order."""
        return [e.value for e in sorted(self.eigenvalues, key=lambda e: e.index)
                if e.branch == name]


def uniform_masses(p: ModelParams, kind: Literal["stable", "saddle"]) -> tuple[float, float]:
    """Constant potential terms ``(c1, c2)`` of ``-d^2/dz^2 + c_i`` for each field."""
    if kind == "stable":
        return 2.0 * p.mu1, p.gap
    if kind == "saddle":
        return -p.gap, 2.0 * p.mu2
    raise ValueError(f"unknown operator kind {kind!r}")


def spectrum_uniform(L: float, p: ModelParams, kind: Literal["stable", "saddle"],
                     n_max: int = 128) -> SpectrumReport:
    """Neumann eigenvalues ``pi^2 n^2 / L^2 + c_i`` for ``n = 0..n_max`` on both branches."""
    if not L > 0.0:
        raise DomainError(f"need L > 0, got {L!r}")
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    c1, c2 = uniform_masses(p, kind)
    k2 = (math.pi / L) ** 2
    eig = [Eigenvalue(k2 * n * n + c, b, n)
           for b, c in (("field1", c1), ("field2", c2)) for n in range(n_max + 1)]
    eig.sort(key=lambda e: (e.value, e.branch, e.index))
    return SpectrumReport(tuple(eig), kind)


def prefactor_below(L: float, p: ModelParams) -> float:
    """Closed-form rate prefactor for ``0 < L < L_c``.

    Both saddles ``(0, +-sqrt(mu2))`` are already counted, so no further
    symmetry factor of 2 may be applied to the result.
    """
    lc = critical_length(p)
    if not 0.0 < L < lc:
        raise DomainError(f"closed-form prefactor needs 0 < L < L_c={lc!r}, got {L!r}")
    a = p.wavenumber
    ratio = (
        math.sinh(a * L) / math.sinh(math.sqrt(2.0 * p.mu2) * L)
        * math.sinh(math.sqrt(2.0 * p.mu1) * L) / abs(math.sin(a * L))
    )
    return (p.mu1 / p.mu2) ** 0.25 * math.sqrt(ratio) * p.gap / math.pi


@dataclass(frozen=True)
class RateResult:
    delta_e: float
    gamma0: float
    lambda_neg: float
    epsilon: float
    gamma: float

    @property
    def mean_escape_time(self) -> float:
        return 1.0 / self.gamma


def kramers_rate(delta_e: float, gamma0: float, lambda_neg: float, epsilon: float) -> RateResult:
    """Assemble ``gamma = gamma0 * exp(-delta_e / epsilon)``."""
    if not epsilon > 0.0:
        raise DomainError(f"noise strength must be positive, got {epsilon!r}")
    if not lambda_neg < 0.0:
        raise DomainError(f"unstable eigenvalue must be negative, got {lambda_neg!r}")
    return RateResult(delta_e, gamma0, lambda_neg, epsilon, gamma0 * math.exp(-delta_e / epsilon))
