"""Determinant ratios by Forman's boundary-matrix formula and the rate prefactor.

For two ``2x2`` matrix Sturm-Liouville operators ``-d^2/dz^2 + V(z)`` with the
same boundary conditions,

    det Lambda_s / det Lambda_u = det[M + N Y_s(L/2)] / det[M + N Y_u(L/2)],

where ``Y(z)`` propagates ``(eta, eta')`` from ``z = -L/2`` and ``M, N``
encode the boundary conditions.  ``Y_u`` for the nonuniform saddle is found
by integrating the first-order system with fixed-step RK4.

The prefactor is ``(1/pi) sqrt(|det ratio|) |lambda_neg|`` where
``lambda_neg`` is the single negative eigenvalue of the saddle operator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Literal, NamedTuple, Optional

import numpy as np
import scipy.sparse as sparse
from numba import njit
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, DomainError, NumericalOverflowError, SingularityError
from .model import Instanton, ModelParams, critical_length, potential_hessian
from .spectra import RateResult, kramers_rate, prefactor_below, uniform_masses

DEFAULT_STEPS = 4096
DEFAULT_RESCALE = 1e100
DEFAULT_INTERVALS = 800
# no prefactor is reported this close to the critical length
EXCLUSION = 1e-6
SINGULAR = 1e-9
# relative precision of the saddle determinant; its exponentially small
# eigenvalue limits what double precision can resolve on long intervals
DET_TOL = 1e-6
MAX_STEPS = 2 ** 18


@dataclass(frozen=True)
class BoundaryMatrices:
    M: np.ndarray
    N: np.ndarray

    def residual(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """``M @ left + N @ right`` for boundary data ``(eta, eta')`` at each end."""
        return self.M @ np.asarray(left, dtype=float) + self.N @ np.asarray(right, dtype=float)


def neumann_boundary_matrices() -> BoundaryMatrices:
    """Boundary matrices expressing ``eta'(-L/2) = eta'(L/2) = 0``."""
    M = np.zeros((4, 4))
    N = np.zeros((4, 4))
    M[0, 2] = M[1, 3] = 1.0
    N[2, 2] = N[3, 3] = 1.0
    M.setflags(write=False)
    N.setflags(write=False)
    return BoundaryMatrices(M, N)


OperatorKind = Literal["uniform_stable", "uniform_saddle", "nonuniform_saddle"]


@dataclass(frozen=True)
class OperatorSpec:
    """Which linearized operator to build: its kind, the model, and the saddle if nonuniform."""

    kind: OperatorKind
    params: ModelParams
    instanton: Optional[Instanton] = None

    def __post_init__(self) -> None:
        if self.kind not in ("uniform_stable", "uniform_saddle", "nonuniform_saddle"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "nonuniform_saddle":
            if self.instanton is None:
                raise ValueError("nonuniform_saddle needs an instanton")
            if self.instanton.params != self.params:
                raise ValueError("instanton was built for different parameters")

    def potential_matrix(self, z: np.ndarray):
        """Entries ``(V11, V12, V22)`` of the potential term at positions ``z``."""
        z = np.asarray(z, dtype=float)
        if self.kind == "nonuniform_saddle":
            phi1, phi2 = self.instanton(z)
            return potential_hessian(phi1, phi2, self.params)
        c1, c2 = uniform_masses(self.params, "stable" if self.kind == "uniform_stable" else "saddle")
        zero = np.zeros_like(z)
        return c1 + zero, zero, c2 + zero


@dataclass(frozen=True)
class FundamentalMatrix:
    """``Y(L/2) = y @ diag(exp(log_scales))``.

    Columns are rescaled during integration to keep ``y`` finite; the
    scale factors are only applied (in log form) when a determinant is taken.
    """

    y: np.ndarray
    log_scales: np.ndarray

    @property
    def log_scale(self) -> float:
        return float(np.sum(self.log_scales))

    def matrix(self) -> np.ndarray:
        """The unscaled ``Y``; overflows to ``inf`` for very long intervals."""
        with np.errstate(over="ignore"):
            return self.y * np.exp(self.log_scales)[None, :]

    def boundary_determinant(self, bm: BoundaryMatrices) -> tuple[float, float]:
        """``(sign, log|det|)`` of ``M + N Y``.

        Uses ``det(M + N y D) = det(M D^-1 + N y) det(D)`` so the large
        scales never meet the unit entries of ``M``.
        """
        scaled_m = bm.M * np.exp(-self.log_scales)[None, :]
        sign, logdet = np.linalg.slogdet(scaled_m + bm.N @ self.y)
        return float(sign), float(logdet) + self.log_scale


def constant_fundamental(c1: float, c2: float, L: float) -> FundamentalMatrix:
    """Closed-form ``Y(L/2)`` for ``eta_i'' = c_i eta_i`` (constant, uncoupled)."""
    y = np.zeros((4, 4))
    logs = np.zeros(4)
    for i, c in enumerate((c1, c2)):
        if c > 0.0:
            s = math.sqrt(c)
            x = s * L
            if x > 30.0:
                # factor exp(x)/2 out of both columns of this block
                e = math.exp(-2.0 * x)
                ch, sh = 1.0 + e, 1.0 - e
                logs[i] = logs[i + 2] = x - math.log(2.0)
            else:
                ch, sh = math.cosh(x), math.sinh(x)
            y[i, i], y[i, i + 2] = ch, sh / s
            y[i + 2, i], y[i + 2, i + 2] = s * sh, ch
        elif c < 0.0:
            s = math.sqrt(-c)
            x = s * L
            y[i, i], y[i, i + 2] = math.cos(x), math.sin(x) / s
            y[i + 2, i], y[i + 2, i + 2] = -s * math.sin(x), math.cos(x)
        else:
            y[i, i] = y[i + 2, i + 2] = 1.0
            y[i, i + 2] = L
    return FundamentalMatrix(y, logs)


@njit(cache=True)
def _rk4(v11, v12, v22, h, threshold):
    """Classical RK4 for ``Y' = [[0, I], [V, 0]] Y`` from ``Y = I``.

    ``V`` is sampled at every half step.  Returns ``(y, log_scales, failed)``
    with ``failed`` the step index of a non-finite result, or -1.
    """
    steps = (v11.shape[0] - 1) // 2
    y = np.eye(4)
    logs = np.zeros(4)
    k1 = np.empty((4, 4))
    k2 = np.empty((4, 4))
    k3 = np.empty((4, 4))
    k4 = np.empty((4, 4))
    t = np.empty((4, 4))

    def rhs(i, src, out):
        # rows 0-1 copy the derivative rows, rows 2-3 apply V to the value rows
        for j in range(4):
            out[0, j] = src[2, j]
            out[1, j] = src[3, j]
            out[2, j] = v11[i] * src[0, j] + v12[i] * src[1, j]
            out[3, j] = v12[i] * src[0, j] + v22[i] * src[1, j]

    for k in range(steps):
        rhs(2 * k, y, k1)
        t[:, :] = y + 0.5 * h * k1
        rhs(2 * k + 1, t, k2)
        t[:, :] = y + 0.5 * h * k2
        rhs(2 * k + 1, t, k3)
        t[:, :] = y + h * k3
        rhs(2 * k + 2, t, k4)
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for j in range(4):
            nrm = math.sqrt(y[0, j] ** 2 + y[1, j] ** 2 + y[2, j] ** 2 + y[3, j] ** 2)
            if not math.isfinite(nrm):
                return y, logs, k
            if nrm > threshold:
                for i in range(4):
                    y[i, j] /= nrm
                logs[j] += math.log(nrm)
    return y, logs, -1


def integrate_fundamental(spec: OperatorSpec, L: float, steps: int = DEFAULT_STEPS,
                          rescale_threshold: float = DEFAULT_RESCALE) -> FundamentalMatrix:
    """Integrate ``Y' = A(z) Y`` from ``Y(-L/2) = I`` to ``z = L/2`` with classical RK4.

    ``A = [[0, I], [V(z), 0]]``.  Whenever a column's norm exceeds
    ``rescale_threshold`` it is divided by that norm and the logarithm is
    added to the column's entry in ``log_scales``.
    """
    if steps < 256:
        raise DomainError("need at least 256 integration steps")
    if not L >= 0.0:
        raise DomainError(f"need L >= 0, got {L!r}")
    if spec.kind == "nonuniform_saddle" and abs(spec.instanton.L - L) > 1e-10 * max(1.0, L):
        raise ValueError(f"instanton length {spec.instanton.L!r} does not match L={L!r}")

    h = L / steps
    z = -0.5 * L + 0.5 * h * np.arange(2 * steps + 1)
    v11, v12, v22 = spec.potential_matrix(z)
    y, logs, failed = _rk4(np.ascontiguousarray(v11), np.ascontiguousarray(v12),
                           np.ascontiguousarray(v22), h, float(rescale_threshold))
    if failed >= 0:
        raise NumericalOverflowError(f"fundamental matrix overflowed at step {failed}")
    return FundamentalMatrix(y, logs)


def _check_conditioning(fm: FundamentalMatrix) -> None:
    # columns 1 and 2 both align with the fastest-growing solution on long
    # intervals; their lower block's determinant then cancels catastrophically
    c = fm.y[2:, :2]
    scale = np.linalg.norm(c[:, 0]) * np.linalg.norm(c[:, 1])
    if scale > 0 and abs(np.linalg.det(c)) < 1e-10 * scale:
        warnings.warn("boundary determinant is ill-conditioned; the interval is too long "
                      "for column rescaling to resolve it", RuntimeWarning, stacklevel=3)


def stable_determinant(L: float, p: ModelParams) -> tuple[float, float]:
    """``(sign, log|det[M + N Y_s]|)`` for the metastable state, in closed form."""
    c1, c2 = uniform_masses(p, "stable")
    return constant_fundamental(c1, c2, L).boundary_determinant(neumann_boundary_matrices())


def saddle_determinant(L: float, p: ModelParams, *, branch: Literal["auto", "uniform"] = "auto",
                       steps: int = DEFAULT_STEPS,
                       rescale_threshold: float = DEFAULT_RESCALE) -> tuple[float, float]:
    """``(sign, log|det[M + N Y_u]|)`` for the transition state at length ``L``.

    ``branch="auto"`` uses the uniform saddle below ``L_c`` and the instanton
    above; ``branch="uniform"`` keeps the uniform saddle on both sides.  On
    the instanton branch the step count is doubled from ``steps`` until
    ``log|det|`` changes by at most ``DET_TOL``.
    """
    bm = neumann_boundary_matrices()
    if not (branch == "auto" and L > critical_length(p)):
        spec = OperatorSpec("uniform_saddle", p)
        return integrate_fundamental(spec, L, steps, rescale_threshold).boundary_determinant(bm)

    spec = OperatorSpec("nonuniform_saddle", p, Instanton.from_length(L, p))
    L = spec.instanton.L
    # the determinant is proportional to the unstable eigenvalue, which is
    # exponentially small on long intervals, so refine until it settles
    fm = integrate_fundamental(spec, L, steps, rescale_threshold)
    prev = fm.boundary_determinant(bm)
    n = steps
    while True:
        n *= 2
        fm = integrate_fundamental(spec, L, n, rescale_threshold)
        cur = fm.boundary_determinant(bm)
        if cur[0] == prev[0] and abs(cur[1] - prev[1]) <= DET_TOL:
            _check_conditioning(fm)
            return cur
        if n >= MAX_STEPS:
            raise ConvergenceError(
                f"saddle determinant not resolved at L={L!r} with {n} steps; the unstable "
                "eigenvalue is too small for double precision")
        prev = cur


def det_ratio(L: float, p: ModelParams, steps: int = DEFAULT_STEPS,
              rescale_threshold: float = DEFAULT_RESCALE) -> float:
    """``det Lambda_s / det Lambda_u`` for the Neumann problem on length ``L``.

    Raises
    ------
    SingularityError
        Within ``1e-9`` of ``L_c``, where ``Lambda_u`` has a zero mode.
    """
    if not L > 0.0:
        raise DomainError(f"need L > 0, got {L!r}")
    if abs(L - critical_length(p)) <= SINGULAR:
        raise SingularityError("determinant ratio is singular at the critical length")
    s_sign, s_log = stable_determinant(L, p)
    u_sign, u_log = saddle_determinant(L, p, steps=steps, rescale_threshold=rescale_threshold)
    if u_sign == 0.0:
        raise SingularityError(f"saddle determinant vanished at L={L!r}")
    return s_sign * u_sign * math.exp(s_log - u_log)


def lattice_saddle_operator(L: float, p: ModelParams, intervals: int):
    """Finite-difference saddle operator as a symmetric pencil ``(S, w)``.

    Sites ``z_i = -L/2 + i h`` carry interleaved unknowns
    ``(eta1_i, eta2_i)``.  Neumann ends use mirrored ghost points, which
    is equivalent to trapezoid weights ``w`` (half at the ends), so the
    eigenproblem ``S x = lambda diag(w) x`` is symmetric.
    """
    inst = Instanton.from_length(L, p)
    z = np.linspace(-inst.L / 2, inst.L / 2, intervals + 1)
    h = inst.L / intervals
    v11, v12, v22 = potential_hessian(*inst(z), p)
    w = np.full(intervals + 1, h)
    w[0] = w[-1] = 0.5 * h

    n = 2 * (intervals + 1)
    stiff_diag = np.full(intervals + 1, 2.0 / h)
    stiff_diag[0] = stiff_diag[-1] = 1.0 / h
    main = np.empty(n)
    main[0::2] = stiff_diag + w * v11
    main[1::2] = stiff_diag + w * v22
    couple = np.zeros(n - 1)
    couple[0::2] = w * v12
    neighbour = np.full(n - 2, -1.0 / h)
    S = sparse.diags([neighbour, couple, main, couple, neighbour], [-2, -1, 0, 1, 2], format="csc")
    weights = np.repeat(w, 2)
    # lowest eigenvalue of the 2x2 potential at any site bounds the spectrum below
    floor = np.min(0.5 * (v11 + v22) - np.sqrt(0.25 * (v11 - v22) ** 2 + v12 ** 2))
    return S, weights, float(floor)


def _inverse_iteration(S, weights, shift, x, rtol, max_iter):
    lu = splu((S - sparse.diags(shift * weights)).tocsc())
    lam = math.inf
    for _ in range(max_iter):
        y = lu.solve(weights * x)
        # y ~ x / (lambda - shift); this avoids the cancellation in x^T S x
        new = shift + 1.0 / float(np.dot(x, weights * y))
        x = y / math.sqrt(np.dot(y, weights * y))
        if abs(new - lam) <= rtol * abs(new - shift):
            return new, x
        lam = new
    raise ConvergenceError("inverse iteration did not converge")


def _lowest_eigenvalue(S, weights: np.ndarray, floor: float) -> float:
    """Lowest eigenvalue of ``S x = lambda diag(weights) x`` given a lower bound ``floor``."""
    x = np.ones(len(weights))
    x[1::2] = 0.5
    x /= math.sqrt(np.dot(x, weights * x))
    # a shift below the whole spectrum always converges to the lowest eigenvalue
    shift = floor - 0.5
    lam, x = _inverse_iteration(S, weights, shift, x, 1e-9, 20000)
    # then polish with a shift just below the estimate, still under lambda_1
    shift = lam - 1e-4 * (lam - shift)
    lam, _ = _inverse_iteration(S, weights, shift, x, 1e-12, 200)
    return lam


def lattice_lowest_eigenvalue(L: float, p: ModelParams, intervals: int) -> float:
    """Smallest eigenvalue of the finite-difference saddle operator (shifted inverse iteration)."""
    S, w, floor = lattice_saddle_operator(L, p, intervals)
    return _lowest_eigenvalue(S, w, floor)


def negative_eigenvalue(L: float, p: ModelParams, intervals: int = DEFAULT_INTERVALS,
                        rtol: float = 1e-4, max_intervals: int = 32 * DEFAULT_INTERVALS) -> float:
    """The unstable eigenvalue of the transition-state operator.

    Below ``L_c`` it is ``-(mu1 - mu2)`` exactly.  Above, the lowest
    eigenvalue of the finite-difference operator is Richardson-extrapolated
    (in ``h^2``) from ``intervals`` and ``2 * intervals`` cells.  The
    extrapolant is compared with the one from half the resolution, and the
    grid is doubled until the two agree to ``rtol``.

    For ``L`` well above ``L_c`` this eigenvalue belongs to a translation-like
    mode and decays exponentially with ``L``.
    """
    if not L > 0.0:
        raise DomainError(f"need L > 0, got {L!r}")
    if L <= critical_length(p):
        return -p.gap
    n = intervals
    coarse = lattice_lowest_eigenvalue(L, p, n // 2)
    mid = lattice_lowest_eigenvalue(L, p, n)
    while True:
        fine = lattice_lowest_eigenvalue(L, p, 2 * n)
        previous = (4.0 * mid - coarse) / 3.0
        extrapolated = (4.0 * fine - mid) / 3.0
        if abs(extrapolated - previous) <= rtol * abs(extrapolated):
            break
        if 4 * n > max_intervals:
            raise ConvergenceError(
                f"eigenvalue extrapolation disagrees at L={L!r}: "
                f"{previous!r} vs {extrapolated!r} with {2 * n} cells")
        n *= 2
        coarse, mid = mid, fine
    if not extrapolated < 0.0:
        raise ConvergenceError(f"saddle operator has no negative eigenvalue at L={L!r}")
    return extrapolated


def prefactor(L: float, p: ModelParams, steps: int = DEFAULT_STEPS) -> float:
    """Rate prefactor ``(1/pi) sqrt(|det ratio|) |lambda_neg|`` on either side of ``L_c``."""
    if abs(L - critical_length(p)) <= EXCLUSION:
        raise SingularityError(f"L={L!r} is within {EXCLUSION} of the critical length")
    return math.sqrt(abs(det_ratio(L, p, steps))) * abs(negative_eigenvalue(L, p)) / math.pi


def escape_rate(L: float, p: ModelParams, epsilon: float) -> RateResult:
    """Kramers rate at noise strength ``epsilon`` from the barrier and prefactor."""
    from .model import barrier

    return kramers_rate(barrier(L, p), prefactor(L, p), negative_eigenvalue(L, p), epsilon)


class PowerLawFit(NamedTuple):
    slope: float
    intercept: float


def fit_power_law(distances, values) -> PowerLawFit:
    """Least-squares line through ``(log distance, log value)`` (natural logs)."""
    x = np.log(np.asarray(distances, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    return PowerLawFit(float(slope), float(intercept))


DEFAULT_WINDOWS = {"below": (1e-4, 1e-2), "above": (1e-4, 1e-2)}


def fit_critical_exponent(p: ModelParams, side: Literal["below", "above"],
                          window: Optional[tuple[float, float]] = None, n_points: int = 12,
                          prefactor_fn: Optional[Callable[[float], float]] = None) -> PowerLawFit:
    """Fit ``log Gamma0 = slope * log|L - L_c| + intercept`` on one side of ``L_c``.

    Distances ``|L - L_c|`` are log-spaced over ``window``.  Below ``L_c``
    the closed-form prefactor is used, above it the Forman route;
    ``prefactor_fn`` overrides both.
    """
    if side not in ("below", "above"):
        raise ValueError(f"side must be 'below' or 'above', got {side!r}")
    lo, hi = DEFAULT_WINDOWS[side] if window is None else window
    lc = critical_length(p)
    if not 0.0 < lo < hi or (side == "below" and hi >= lc):
        raise DomainError(f"window {(lo, hi)!r} is not inside the valid range")
    if n_points < 8:
        raise DomainError("need at least 8 points for the fit")
    if prefactor_fn is None:
        prefactor_fn = (lambda L: prefactor_below(L, p)) if side == "below" else (
            lambda L: prefactor(L, p))
    sgn = -1.0 if side == "below" else 1.0
    distances = np.geomspace(lo, hi, n_points)
    values = [prefactor_fn(lc + sgn * d) for d in distances]
    return fit_power_law(distances, values)
