"""Complete elliptic integrals and Jacobi elliptic functions.

All routines take the *parameter* ``m`` (``m = k**2``), not the modulus
``k``.  With this convention ``sn(u|m)`` and ``cn(u|m)`` have real period
``4K(m)`` and ``dn(u|m)`` has real period ``2K(m)``.  SciPy's ``ellipk`` and
``ellipj`` happen to use the same convention; mpmath's ``ellipfun`` does too,
but many textbooks and C libraries use ``k``.

Close to ``m = 1`` the complementary parameter ``m1 = 1 - m`` carries the
information, and ``1 - m`` computed in floating point loses it.  Every public
function therefore accepts an optional keyword ``m1``; when given it is used
in place of ``1 - m`` wherever the complementary parameter enters.

Algorithms are the arithmetic-geometric mean for ``K`` and ``E`` and the
descending Landen (AGM) scheme for ``sn, cn, dn``.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Union

import numpy as np

from .errors import DomainError

ArrayLike = Union[float, np.ndarray]

_MAX_AGM_STEPS = 64
_AGM_TOL = 4.0 * np.finfo(float).eps


class JacobiTriple(NamedTuple):
    """Values of ``sn``, ``cn`` and ``dn`` at a common argument."""

    sn: ArrayLike
    cn: ArrayLike
    dn: ArrayLike


def _complement(m: float, m1: float | None) -> tuple[float, float]:
    m = float(m)
    if m1 is None:
        m1 = 1.0 - m
    else:
        m1 = float(m1)
        if abs(m + m1 - 1.0) > 1e-12:
            raise DomainError(f"m={m!r} and m1={m1!r} do not sum to 1")
    if not (0.0 <= m <= 1.0) or not (0.0 <= m1 <= 1.0) or math.isnan(m):
        raise DomainError(f"elliptic parameter must lie in [0, 1], got m={m!r}")
    return m, m1


def _agm_ladder(m: float, m1: float) -> tuple[list[float], list[float]]:
    """Return the AGM sequences ``a_n`` and ``c_n`` started from ``(1, sqrt(m1))``."""
    a = [1.0]
    c = [math.sqrt(m)]
    b = math.sqrt(m1)
    for _ in range(_MAX_AGM_STEPS):
        an, bn = a[-1], b
        a.append(0.5 * (an + bn))
        c.append(0.5 * (an - bn))
        b = math.sqrt(an * bn)
        # a_n and b_n end up one ulp apart, so c_n stalls instead of reaching 0
        if c[-1] <= _AGM_TOL * a[-1]:
            break
    return a, c


def complete_k(m: float, *, m1: float | None = None) -> float:
    """Complete elliptic integral of the first kind ``K(m)``.

    Parameters
    ----------
    m : float
        Elliptic parameter, ``0 <= m < 1``.
    m1 : float, optional
        Complementary parameter ``1 - m``; pass it directly when ``m`` is so
        close to 1 that ``1 - m`` would be inaccurate.

    Raises
    ------
    DomainError
        If ``m`` is outside ``[0, 1)``; ``K`` diverges logarithmically at 1.
    """
    m, m1 = _complement(m, m1)
    if m1 == 0.0:
        raise DomainError("K(m) diverges at m = 1")
    if m == 0.0:
        return math.pi / 2
    a, _ = _agm_ladder(m, m1)
    return math.pi / (2.0 * a[-1])


def complete_e(m: float, *, m1: float | None = None) -> float:
    """Complete elliptic integral of the second kind ``E(m)`` for ``0 <= m <= 1``."""
    m, m1 = _complement(m, m1)
    if m1 == 0.0:
        return 1.0
    if m == 0.0:
        return math.pi / 2
    a, c = _agm_ladder(m, m1)
    # E = K * (1 - sum 2^(n-1) c_n^2), the n = 0 term being m / 2
    s = 0.0
    for n, cn in enumerate(c):
        s += 2.0 ** (n - 1) * cn * cn
    return math.pi / (2.0 * a[-1]) * (1.0 - s)


def jacobi(u: ArrayLike, m: float, *, m1: float | None = None) -> JacobiTriple:
    """Jacobi elliptic functions ``sn(u|m), cn(u|m), dn(u|m)``.

    ``u`` may be a scalar or a NumPy array; ``m`` is a scalar in ``[0, 1]``.
    The argument is first reduced modulo the common period ``4K(m)``.

    Examples
    --------
    >>> jacobi(0.0, 0.3)
    JacobiTriple(sn=0.0, cn=1.0, dn=1.0)
    """
    m, m1 = _complement(m, m1)
    scalar = np.ndim(u) == 0
    x = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("jacobi requires finite arguments")

    if m == 0.0:
        out = (np.sin(x), np.cos(x), np.ones_like(x))
    elif m1 == 0.0:
        sech = 1.0 / np.cosh(x)
        out = (np.tanh(x), sech, sech.copy())
    else:
        a, c = _agm_ladder(m, m1)
        quarter = math.pi / (2.0 * a[-1])
        period = 4.0 * quarter
        x = x - period * np.round(x / period)

        n_steps = len(a) - 1
        phi = (2.0 ** n_steps) * a[-1] * x
        for n in range(n_steps, 0, -1):
            phi = 0.5 * (phi + np.arcsin(c[n] / a[n] * np.sin(phi)))
        sn = np.sin(phi)
        cn = np.cos(phi)
        # cos(phi0)/cos(phi1 - phi0) is 0/0 at u = K; this form has no cancellation
        dn = np.sqrt(m1 + m * cn * cn)
        out = (sn, cn, dn)

    if scalar:
        return JacobiTriple(float(out[0]), float(out[1]), float(out[2]))
    return JacobiTriple(*out)
