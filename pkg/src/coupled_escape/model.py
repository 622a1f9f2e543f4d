"""Two coupled fields on a Neumann interval: potential, saddles and barriers.

The fields live on ``[-L/2, L/2]`` with unit bending coefficients and the
potential

    U(phi1, phi2) = -mu1/2 phi1^2 + phi1^4/4 - mu2/2 phi2^2 + phi2^4/4
                    + phi1^2 phi2^2 / 2,

with ``mu1 > mu2 > 0``.  The metastable states are ``(+-sqrt(mu1), 0)`` and
the uniform saddles ``(0, +-sqrt(mu2))``.  Above the critical length
``L_c = pi / sqrt(mu1 - mu2)`` the transition state is a nonuniform profile
built from ``sn`` and ``dn`` (see :class:`Instanton`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np

from .elliptic import complete_k, jacobi
from .errors import DomainError, ValidityError

# Gauss-Legendre rule used on every panel of the energy quadrature.
_GL_ORDER = 8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)

DEFAULT_GRID = 1024


@dataclass(frozen=True)
class ModelParams:
    """Curvature parameters of the two fields.

    Both bending coefficients are fixed to 1.
    """

    mu1: float = 3.0
    mu2: float = 2.0

    kappa1: float = field(default=1.0, init=False, repr=False)
    kappa2: float = field(default=1.0, init=False, repr=False)

    def __post_init__(self) -> None:
        mu1, mu2 = float(self.mu1), float(self.mu2)
        if not (math.isfinite(mu1) and math.isfinite(mu2)):
            raise DomainError("mu1 and mu2 must be finite")
        if not mu1 > mu2 > 0.0:
            raise DomainError(f"need mu1 > mu2 > 0, got mu1={mu1}, mu2={mu2}")
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "mu2", mu2)

    @property
    def gap(self) -> float:
        """``mu1 - mu2``."""
        return self.mu1 - self.mu2

    @property
    def wavenumber(self) -> float:
        """``sqrt(mu1 - mu2)``, the scale multiplying ``z`` inside ``sn``, ``dn``."""
        return math.sqrt(self.mu1 - self.mu2)

    @property
    def max_parameter(self) -> float:
        """Largest elliptic parameter with a real ``phi2`` amplitude."""
        return min(1.0, self.mu2 / self.gap)

    def domain_wall_energy(self) -> float:
        """Limit of the barrier as ``L -> inf``: ``(2/3) sqrt(mu1-mu2) (mu1+2 mu2)``."""
        return 2.0 / 3.0 * self.wavenumber * (self.mu1 + 2.0 * self.mu2)


@dataclass(frozen=True)
class UniformState:
    phi1: float
    phi2: float
    kind: Literal["metastable", "saddle", "maximum"]


def metastable_state(p: ModelParams, sign: int = -1) -> UniformState:
    """The uniform minimum ``(sign * sqrt(mu1), 0)``; escape starts from ``sign=-1``."""
    return UniformState(math.copysign(math.sqrt(p.mu1), sign), 0.0, "metastable")


def uniform_saddle(p: ModelParams, sign: int = 1) -> UniformState:
    return UniformState(0.0, math.copysign(math.sqrt(p.mu2), sign), "saddle")


def stationary_points(p: ModelParams) -> list[UniformState]:
    """All five stationary points of ``U`` (origin, two minima, two saddles)."""
    return [
        UniformState(0.0, 0.0, "maximum"),
        metastable_state(p, -1),
        metastable_state(p, 1),
        uniform_saddle(p, -1),
        uniform_saddle(p, 1),
    ]


def potential(phi1, phi2, p: ModelParams):
    """Evaluate ``U(phi1, phi2)``; works elementwise on arrays."""
    s1 = phi1 * phi1
    s2 = phi2 * phi2
    return (
        -0.5 * p.mu1 * s1 + 0.25 * s1 * s1 - 0.5 * p.mu2 * s2 + 0.25 * s2 * s2 + 0.5 * s1 * s2
    )


def potential_gradient(phi1, phi2, p: ModelParams):
    """``(dU/dphi1, dU/dphi2)``."""
    s = phi1 * phi1 + phi2 * phi2
    return phi1 * (s - p.mu1), phi2 * (s - p.mu2)


def potential_hessian(phi1, phi2, p: ModelParams):
    """Second derivatives ``(U_11, U_12, U_22)`` of the potential."""
    s1 = phi1 * phi1
    s2 = phi2 * phi2
    return 3.0 * s1 + s2 - p.mu1, 2.0 * phi1 * phi2, 3.0 * s2 + s1 - p.mu2


def critical_length(p: ModelParams) -> float:
    """Length ``pi / sqrt(mu1 - mu2)`` at which the uniform saddle goes soft."""
    return math.pi / p.wavenumber


def length_from_m(m: float, p: ModelParams, *, m1: Optional[float] = None) -> float:
    """Interval length ``2 K(m) / sqrt(mu1 - mu2)`` of the instanton with parameter ``m``."""
    if m1 is None and not 0.0 <= m < 1.0:
        raise DomainError(f"need 0 <= m < 1, got {m!r}")
    return 2.0 * complete_k(m, m1=m1) / p.wavenumber


# Below this m the bisection runs on m itself, above it on log(m1).
_SPLIT = 0.5
_M1_FLOOR = 1e-300


def solve_parameter(L: float, p: ModelParams) -> tuple[float, float]:
    """Return ``(m, 1 - m)`` with ``length_from_m(m) == L``.

    Both numbers are returned because near ``m = 1`` only the complementary
    parameter is accurate.  The map ``m -> L`` is monotone, so plain
    bisection is used, run until the bracket stops shrinking in floating
    point.
    """
    L = float(L)
    lc = critical_length(p)
    if not L > lc:
        raise DomainError(f"no nonuniform saddle for L={L!r} <= L_c={lc!r}")

    if L <= length_from_m(_SPLIT, p):
        lo, hi = 0.0, _SPLIT
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if length_from_m(mid, p) < L:
                lo = mid
            else:
                hi = mid
        m = 0.5 * (lo + hi)
        m1 = 1.0 - m
    else:
        # length decreases in m1; bisect in log(m1) for relative accuracy
        lo, hi = math.log(_M1_FLOOR), math.log(1.0 - _SPLIT)
        if length_from_m(1.0 - _M1_FLOOR, p, m1=_M1_FLOOR) < L:
            raise DomainError(f"L={L!r} is beyond the representable instanton family")
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            m1_mid = math.exp(mid)
            if length_from_m(1.0 - m1_mid, p, m1=m1_mid) > L:
                lo = mid
            else:
                hi = mid
        m1 = math.exp(0.5 * (lo + hi))
        m = 1.0 - m1

    if p.mu2 - p.gap * m < 0.0 and p.mu2 - p.gap + p.gap * m1 < 0.0:
        raise ValidityError(
            f"instanton at L={L!r} needs m={m!r} > mu2/(mu1-mu2)={p.mu2 / p.gap!r}; "
            "its phi2 amplitude would be imaginary"
        )
    return m, m1


def m_from_length(L: float, p: ModelParams) -> float:
    """Elliptic parameter of the instanton that fits an interval of length ``L``."""
    return solve_parameter(L, p)[0]


@dataclass(frozen=True)
class FieldPair:
    """Two fields sampled on one uniform grid spanning ``[-L/2, L/2]``.

    ``profile`` optionally maps an array of positions to
    ``(phi1, phi2, phi1', phi2')``; when present, :func:`energy` integrates
    the exact profile instead of the samples.
    """

    z: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    profile: Optional[Callable[[np.ndarray], tuple]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        arrays = []
        for name in ("z", "phi1", "phi2"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrays.append(a)
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape) or arrays[0].ndim != 1:
            raise ValueError("z, phi1 and phi2 must be 1-d arrays of equal length")

    @property
    def length(self) -> float:
        return float(self.z[-1] - self.z[0])

    @property
    def spacing(self) -> float:
        return self.length / (len(self.z) - 1)

    @classmethod
    def uniform(cls, state: UniformState, L: float, n: int = DEFAULT_GRID) -> "FieldPair":
        z = np.linspace(-L / 2, L / 2, n)
        one = np.ones_like(z)

        def profile(x):
            x = np.asarray(x, dtype=float)
            zero = np.zeros_like(x)
            return state.phi1 + zero, state.phi2 + zero, zero, zero

        return cls(z, state.phi1 * one, state.phi2 * one, profile)


@dataclass(frozen=True)
class Instanton:
    """Exact nonuniform saddle with elliptic parameter ``m`` on length ``L``.

    ``m1`` holds ``1 - m`` to full relative precision; it matters once ``L``
    is many domain-wall widths long.
    """

    m: float
    L: float
    params: ModelParams
    sign1: int = 1
    sign2: int = 1
    m1: float = float("nan")

    def __post_init__(self) -> None:
        if math.isnan(self.m1):
            object.__setattr__(self, "m1", 1.0 - self.m)
        # m may round to 1.0 on long intervals; m1 then still carries 1 - m
        if not 0.0 <= self.m <= 1.0 or not self.m1 > 0.0:
            raise DomainError(f"instanton parameter must satisfy 0 <= m < 1, got {self.m!r}")
        if self.sign1 not in (1, -1) or self.sign2 not in (1, -1):
            raise ValueError("signs must be +1 or -1")
        expected = length_from_m(self.m, self.params, m1=self.m1)
        if abs(expected - self.L) > 1e-10 * max(1.0, self.L):
            raise ValueError(f"L={self.L!r} inconsistent with m={self.m!r} (expected {expected!r})")
        if self.amplitude2_squared < 0.0:
            raise ValidityError(f"phi2 amplitude is imaginary for m={self.m!r}")

    @classmethod
    def from_m(cls, m: float, p: ModelParams, *, sign1: int = 1, sign2: int = 1,
               m1: Optional[float] = None) -> "Instanton":
        m1 = 1.0 - m if m1 is None else m1
        return cls(m, length_from_m(m, p, m1=m1), p, sign1, sign2, m1)

    @classmethod
    def from_length(cls, L: float, p: ModelParams, *, sign1: int = 1,
                    sign2: int = 1) -> "Instanton":
        m, m1 = solve_parameter(L, p)
        # store the length recomputed from m so the pair is self-consistent
        return cls(m, length_from_m(m, p, m1=m1), p, sign1, sign2, m1)

    @property
    def amplitude1_squared(self) -> float:
        p = self.params
        return self.m * (p.mu1 + p.gap * self.m1)

    @property
    def amplitude2_squared(self) -> float:
        p = self.params
        if self.m <= _SPLIT:
            return p.mu2 - self.m * p.gap
        return (p.mu2 - p.gap) + p.gap * self.m1

    @property
    def amplitude1(self) -> float:
        return self.sign1 * math.sqrt(self.amplitude1_squared)

    @property
    def amplitude2(self) -> float:
        return self.sign2 * math.sqrt(max(self.amplitude2_squared, 0.0))

    def evaluate(self, z):
        """Return ``(phi1, phi2, phi1', phi2')`` at positions ``z``."""
        a = self.params.wavenumber
        sn, cn, dn = jacobi(a * np.asarray(z, dtype=float), self.m, m1=self.m1)
        A, B = self.amplitude1, self.amplitude2
        return A * sn, B * dn, A * a * cn * dn, -B * a * self.m * sn * cn

    def __call__(self, z):
        phi1, phi2, _, _ = self.evaluate(z)
        return phi1, phi2

    def sample(self, n: int = DEFAULT_GRID) -> FieldPair:
        z = np.linspace(-self.L / 2, self.L / 2, n)
        phi1, phi2 = self(z)
        return FieldPair(z, phi1, phi2, self.evaluate)


def instanton_eval(inst: Instanton, z: float) -> tuple[float, float]:
    """Field values of the instanton at a point ``|z| <= L/2``."""
    if abs(z) > inst.L / 2 * (1 + 1e-12):
        raise DomainError(f"z={z!r} outside [-L/2, L/2] with L={inst.L!r}")
    phi1, phi2 = inst(z)
    return float(phi1), float(phi2)


def euler_lagrange_residual(fields: FieldPair, p: ModelParams) -> float:
    """Max-norm residual of the stationary field equations at interior grid points.

    Second derivatives are central differences, so an exact solution gives a
    residual that shrinks like the grid spacing squared.
    """
    if len(fields.z) < 64:
        raise ValueError("need at least 64 grid points")
    h = fields.spacing
    res = 0.0
    g1, g2 = potential_gradient(fields.phi1[1:-1], fields.phi2[1:-1], p)
    for phi, g in ((fields.phi1, g1), (fields.phi2, g2)):
        lap = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / (h * h)
        res = max(res, float(np.max(np.abs(lap - g))))
    return res


def energy(fields: FieldPair, p: ModelParams) -> float:
    """Energy functional ``int (phi1'^2/2 + phi2'^2/2 + U) dz``.

    With an exact ``profile`` the integrand is evaluated by composite
    8-point Gauss-Legendre, one panel per grid cell.  Without one the
    samples are treated as a lattice configuration: trapezoid weights on
    ``U`` and forward differences for the gradient term.  That lattice form
    is the energy whose gradient flow the Langevin simulator discretizes.
    """
    z = fields.z
    if len(z) < 2:
        raise ValueError("need at least 2 grid points")
    if fields.profile is not None:
        left, right = z[:-1], z[1:]
        half = 0.5 * (right - left)
        nodes = (0.5 * (left + right))[:, None] + half[:, None] * _GL_NODES[None, :]
        phi1, phi2, d1, d2 = fields.profile(nodes)
        density = 0.5 * (d1 * d1 + d2 * d2) + potential(phi1, phi2, p)
        return float(np.sum(half * (density @ _GL_WEIGHTS)))

    h = fields.spacing
    u = potential(fields.phi1, fields.phi2, p)
    pot = h * (np.sum(u) - 0.5 * (u[0] + u[-1]))
    grad = 0.5 / h * (np.sum(np.diff(fields.phi1) ** 2) + np.sum(np.diff(fields.phi2) ** 2))
    return float(pot + grad)


def barrier(L: float, p: ModelParams, n_grid: int = DEFAULT_GRID) -> float:
    """Activation barrier: transition-state energy minus metastable energy.

    For ``L <= L_c`` both states are uniform and the barrier is
    ``L (mu1^2 - mu2^2) / 4``; above ``L_c`` the instanton energy is
    integrated by quadrature.
    """
    L = float(L)
    if not L > 0.0:
        raise DomainError(f"need L > 0, got {L!r}")
    if L <= critical_length(p):
        return L * (p.mu1 ** 2 - p.mu2 ** 2) / 4.0
    inst = Instanton.from_length(L, p)
    e_saddle = energy(inst.sample(n_grid), p)
    # metastable energy is exactly -L mu1^2 / 4 on the instanton's own length
    return e_saddle + inst.L * p.mu1 ** 2 / 4.0
