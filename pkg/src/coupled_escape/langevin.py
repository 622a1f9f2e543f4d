"""Euler-Maruyama simulation of the noisy field equations on a Neumann lattice.

The lattice has ``n_sites`` points ``z_i = -L/2 + i dz`` including both
ends.  The Laplacian uses mirrored ghost sites, which makes the zero-noise
update an explicit gradient step on the lattice energy with trapezoid
weights (:func:`coupled_escape.model.energy` without a profile).

``epsilon`` is the temperature of the Kramers formula: the simulated
equation is ``phi' = -dH/dphi + sqrt(2 epsilon) xi`` with unit white noise
``xi``.  Noise increments therefore have variance
``2 epsilon dt / (w_i dz)`` with ``w_i = 1/2`` at the ends and 1 inside,
and the stationary law of the lattice is ``exp(-H_lattice / epsilon)``.
A noise amplitude ``sqrt(eps0)`` written directly on the white noise
corresponds to ``epsilon = eps0 / 2``.

Random streams
--------------
Run ``k`` of an ensemble with seed ``s`` draws from
``Generator(PCG64(SeedSequence(s, spawn_key=(k,))))``.  Each step consumes
``2 * n_sites`` standard normals, field 1 first, in site order.  This rule
is part of the output contract: changing it changes every stored result.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit

from .errors import DomainError, InstabilityError, InsufficientSamplingError
from .model import FieldPair, ModelParams, barrier, energy

GUARD_FACTOR = 10.0
MAX_CENSORED_FRACTION = 0.2


@dataclass(frozen=True)
class LatticeConfig:
    """Lattice and integrator settings.

    ``dt`` defaults to ``0.4 dz^2``.  ``epsilon = 0`` is accepted and gives
    the zero-noise dynamics.
    """

    n_sites: int = 32
    L: float = 2.0
    epsilon: float = 0.5
    dt: Optional[float] = None
    seed: int = 0
    max_time: float = 1e4

    def __post_init__(self) -> None:
        if self.n_sites < 16:
            raise DomainError("need at least 16 lattice sites")
        if not self.L > 0.0:
            raise DomainError(f"need L > 0, got {self.L!r}")
        if not self.epsilon >= 0.0:
            raise DomainError(f"noise strength must be non-negative, got {self.epsilon!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if not self.max_time > 0.0:
            raise DomainError("max_time must be positive")
        dz = self.dz
        if self.dt is None:
            object.__setattr__(self, "dt", 0.4 * dz * dz)
        if not 0.0 < self.dt < 0.5 * dz * dz:
            raise DomainError(f"dt={self.dt!r} violates the stability bound dz^2/2={0.5 * dz * dz!r}")

    @property
    def dz(self) -> float:
        return self.L / (self.n_sites - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(-self.L / 2, self.L / 2, self.n_sites)

    def noise_amplitudes(self) -> np.ndarray:
        """Per-site standard deviation of one step's noise increment."""
        amp = np.full(self.n_sites, math.sqrt(2.0 * self.epsilon * self.dt / self.dz))
        # half-cell weight at the Neumann ends doubles the variance there
        amp[0] = amp[-1] = math.sqrt(4.0 * self.epsilon * self.dt / self.dz)
        return amp


@dataclass(frozen=True)
class LatticeState:
    phi1: np.ndarray
    phi2: np.ndarray
    time: float = 0.0

    @classmethod
    def metastable(cls, cfg: LatticeConfig, p: ModelParams, sign: int = -1) -> "LatticeState":
        phi1 = np.full(cfg.n_sites, math.copysign(math.sqrt(p.mu1), sign))
        return cls(phi1, np.zeros(cfg.n_sites), 0.0)

    def fields(self, cfg: LatticeConfig) -> FieldPair:
        return FieldPair(cfg.grid, self.phi1, self.phi2)


def lattice_energy(state: LatticeState, cfg: LatticeConfig, p: ModelParams) -> float:
    return energy(state.fields(cfg), p)


def _laplacian(phi: np.ndarray, dz: float) -> np.ndarray:
    lap = np.empty_like(phi)
    lap[1:-1] = phi[2:] - 2.0 * phi[1:-1] + phi[:-2]
    lap[0] = 2.0 * (phi[1] - phi[0])
    lap[-1] = 2.0 * (phi[-2] - phi[-1])
    return lap / (dz * dz)


def drift(phi1: np.ndarray, phi2: np.ndarray, dz: float, p: ModelParams):
    """Zero-noise right-hand side ``(phi'' - dU/dphi)`` for both fields."""
    s = phi1 * phi1 + phi2 * phi2
    return (_laplacian(phi1, dz) - phi1 * (s - p.mu1),
            _laplacian(phi2, dz) - phi2 * (s - p.mu2))


def _guard(phi1: np.ndarray, phi2: np.ndarray, p: ModelParams) -> None:
    bound = GUARD_FACTOR * math.sqrt(p.mu1)
    if not (np.all(np.abs(phi1) < bound) and np.all(np.abs(phi2) < bound)):
        raise InstabilityError("lattice fields left the blow-up guard; reduce dt")


def deterministic_step(state: LatticeState, cfg: LatticeConfig, p: ModelParams) -> LatticeState:
    """One explicit Euler step of the zero-noise dynamics."""
    d1, d2 = drift(state.phi1, state.phi2, cfg.dz, p)
    phi1 = state.phi1 + cfg.dt * d1
    phi2 = state.phi2 + cfg.dt * d2
    _guard(phi1, phi2, p)
    return LatticeState(phi1, phi2, state.time + cfg.dt)


def stochastic_step(state: LatticeState, cfg: LatticeConfig, p: ModelParams,
                    rng: np.random.Generator) -> LatticeState:
    """One Euler-Maruyama step; draws ``2 * n_sites`` normals from ``rng``."""
    xi = rng.standard_normal((2, cfg.n_sites))
    amp = cfg.noise_amplitudes()
    d1, d2 = drift(state.phi1, state.phi2, cfg.dz, p)
    phi1 = state.phi1 + cfg.dt * d1 + amp * xi[0]
    phi2 = state.phi2 + cfg.dt * d2 + amp * xi[1]
    _guard(phi1, phi2, p)
    return LatticeState(phi1, phi2, state.time + cfg.dt)


@njit(cache=True, nogil=True)
def _advance(phi1, phi2, rng, max_steps, dt, dz, mu1, mu2, amp, threshold, bound):
    """Run Euler-Maruyama steps until escape, blow-up or ``max_steps``.

    Normals are drawn in the same order as :func:`stochastic_step`.
    Returns ``(steps_taken, status)`` with status 0 still running, 1 escaped,
    2 blown up.  ``phi1`` and ``phi2`` are updated in place.
    """
    n = phi1.shape[0]
    inv = 1.0 / (dz * dz)
    d1 = np.empty(n)
    d2 = np.empty(n)
    for k in range(max_steps):
        for i in range(n):
            if i == 0:
                l1 = 2.0 * (phi1[1] - phi1[0])
                l2 = 2.0 * (phi2[1] - phi2[0])
            elif i == n - 1:
                l1 = 2.0 * (phi1[n - 2] - phi1[n - 1])
                l2 = 2.0 * (phi2[n - 2] - phi2[n - 1])
            else:
                l1 = phi1[i + 1] - 2.0 * phi1[i] + phi1[i - 1]
                l2 = phi2[i + 1] - 2.0 * phi2[i] + phi2[i - 1]
            s = phi1[i] * phi1[i] + phi2[i] * phi2[i]
            d1[i] = l1 * inv - phi1[i] * (s - mu1)
            d2[i] = l2 * inv - phi2[i] * (s - mu2)
        blown = False
        total = 0.0
        for i in range(n):
            phi1[i] += dt * d1[i] + amp[i] * rng.standard_normal()
            if not abs(phi1[i]) < bound:
                blown = True
            w = 0.5 if (i == 0 or i == n - 1) else 1.0
            total += w * phi1[i]
        for i in range(n):
            phi2[i] += dt * d2[i] + amp[i] * rng.standard_normal()
            if not abs(phi2[i]) < bound:
                blown = True
        if blown:
            return k + 1, 2
        if total / (n - 1) > threshold:
            return k + 1, 1
    return max_steps, 0


class FirstPassage(NamedTuple):
    time: float
    censored: bool


def run_generator(seed: int, run_index: int) -> np.random.Generator:
    """Independent random stream for run ``run_index`` of an ensemble."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run_index,))))


def first_passage(cfg: LatticeConfig, p: ModelParams, rng: np.random.Generator) -> FirstPassage:
    """Time until the trapezoid-averaged ``phi1`` first exceeds ``sqrt(mu1)/2``.

    The run starts from ``phi1 = -sqrt(mu1), phi2 = 0`` everywhere.  If no
    escape happens by ``cfg.max_time`` the result is censored at that time.
    """
    state = LatticeState.metastable(cfg, p)
    phi1, phi2 = state.phi1.copy(), state.phi2.copy()
    amp = cfg.noise_amplitudes()
    threshold = 0.5 * math.sqrt(p.mu1)
    bound = GUARD_FACTOR * math.sqrt(p.mu1)
    max_steps = int(math.ceil(cfg.max_time / cfg.dt))
    steps, status = _advance(phi1, phi2, rng, max_steps, cfg.dt, cfg.dz, p.mu1, p.mu2, amp,
                             threshold, bound)
    if status == 2:
        raise InstabilityError("lattice fields left the blow-up guard; reduce dt")
    if status == 1:
        return FirstPassage(steps * cfg.dt, False)
    return FirstPassage(cfg.max_time, True)


@dataclass(frozen=True)
class EscapeStats:
    """First-passage times of an ensemble, listed in run-index order."""

    first_passage_times: tuple[float, ...]
    censored: tuple[bool, ...]
    mean: float
    stderr: float
    n_runs: int
    epsilon: float = field(default=float("nan"))

    @classmethod
    def from_times(cls, times: Sequence[float], censored: Optional[Sequence[bool]] = None,
                   epsilon: float = float("nan")) -> "EscapeStats":
        times = tuple(float(t) for t in times)
        censored = tuple(bool(c) for c in (censored or [False] * len(times)))
        n = len(times)
        # statistics from the sorted sample so merge order cannot change them
        ordered = np.sort(np.asarray(times))
        mean = float(np.sum(ordered) / n) if n else float("nan")
        stderr = float(np.std(ordered, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        return cls(times, censored, mean, stderr, n, epsilon)

    @property
    def censored_fraction(self) -> float:
        return sum(self.censored) / self.n_runs if self.n_runs else 0.0


def _run_chunk(args):
    cfg, p, indices = args
    return [first_passage(cfg, p, run_generator(cfg.seed, k)) for k in indices]


def escape_statistics(cfg: LatticeConfig, p: ModelParams, n_runs: int,
                      jobs: int = 1) -> EscapeStats:
    """First-passage ensemble of ``n_runs`` independent runs.

    Runs may be spread over ``jobs`` worker processes; results do not depend
    on ``jobs`` because each run owns its random stream.
    """
    if not cfg.epsilon > 0.0:
        raise DomainError("first-passage runs need epsilon > 0")
    if jobs <= 1:
        results = _run_chunk((cfg, p, range(n_runs)))
    else:
        chunks = [range(i, n_runs, jobs) for i in range(jobs)]
        results = [None] * n_runs
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for chunk, out in zip(chunks, pool.map(_run_chunk, [(cfg, p, c) for c in chunks])):
                for k, r in zip(chunk, out):
                    results[k] = r
    return EscapeStats.from_times([r.time for r in results], [r.censored for r in results],
                                  cfg.epsilon)


class ArrheniusFit(NamedTuple):
    slope: float
    stderr: float


def fit_arrhenius(stats: Sequence[EscapeStats], n_boot: int = 1000, seed: int = 0) -> ArrheniusFit:
    """Slope of ``log(mean first-passage time)`` against ``1/epsilon``.

    The slope estimates the barrier.  Its standard error comes from a
    bootstrap over the runs at each noise strength.

    Raises
    ------
    InsufficientSamplingError
        If more than 20% of the runs at any noise strength were censored.
    """
    if len(stats) < 2:
        raise DomainError("need at least two noise strengths")
    for s in stats:
        if s.censored_fraction > MAX_CENSORED_FRACTION:
            raise InsufficientSamplingError(
                f"{s.censored_fraction:.0%} of runs censored at epsilon={s.epsilon!r}")
    x = np.array([1.0 / s.epsilon for s in stats])
    y = np.log([s.mean for s in stats])
    slope = float(np.polyfit(x, y, 1)[0])

    rng = np.random.default_rng(seed)
    samples = [np.asarray(s.first_passage_times) for s in stats]
    boot = np.empty(n_boot)
    for b in range(n_boot):
        yb = [math.log(np.mean(t[rng.integers(0, len(t), len(t))])) for t in samples]
        boot[b] = np.polyfit(x, yb, 1)[0]
    return ArrheniusFit(slope, float(np.std(boot, ddof=1)))


def arrhenius_scan(cfg_base: LatticeConfig, p: ModelParams, eps_list: Sequence[float],
                   n_runs: int, jobs: int = 1) -> ArrheniusFit:
    """Run ensembles at each noise strength and fit the Arrhenius slope.

    Every ``barrier / epsilon`` must lie in ``[4, 9]`` and ``n_runs >= 100``.
    """
    if n_runs < 100:
        raise DomainError("need at least 100 runs per noise strength")
    delta_e = barrier(cfg_base.L, p)
    for eps in eps_list:
        if not 4.0 <= delta_e / eps <= 9.0:
            raise DomainError(f"barrier/epsilon={delta_e / eps:.3g} outside [4, 9]")
    stats = [escape_statistics(replace(cfg_base, epsilon=float(eps)), p, n_runs, jobs)
             for eps in eps_list]
    return fit_arrhenius(stats)
