"""Perturbative expansion of the excitation profile around a designed trajectory.

The error Hamiltonian adds ``(1/2)[[-delta, alpha*Omega], [alpha*Omega, delta]]``
to the design Hamiltonian. In the moving frame spanned by the unperturbed
solution and its orthogonal partner, the perturbation has the matrix

    [[ e,      f ],
     [ conj(f), -e ]]

with (``gdot = d gamma / dt``)

    e = -(1/2) (delta cos(theta) - alpha gdot sin^2(theta))
    f = (1/2) [delta sin(theta) + alpha (gdot sin(2 theta)/2 - i theta_dot)] e^{i gamma}

Everything is evaluated per unit error parameter along a direction
``(alpha, delta)``; the physical term of order n is ``Otilde_n * eps**n``.

For pure area errors (``delta = 0``) every kernel carries a factor
``theta_dot``, so integrals are taken over ``theta`` in ``[0, pi]`` and do not
depend on the schedule. Detuning integrals are taken in time over the
schedule window.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Tuple, Union

import numpy as np
from scipy import integrate

from .errors import ValidationError
from .trajectory import ThetaSchedule, Trajectory

MAX_ORDER = 8

HIERARCHY_RTOL = 1e-12
HIERARCHY_ATOL = 1e-14
QUAD_EPSREL = 1e-11
QUAD_EPSABS = 1e-14


class ErrorChannel(str, Enum):
    AREA = "area"
    DETUNING = "detuning"
    BOTH = "both"

    @property
    def directions(self) -> Dict["ErrorChannel", Tuple[float, float]]:
        if self is ErrorChannel.AREA:
            return {ErrorChannel.AREA: (1.0, 0.0)}
        if self is ErrorChannel.DETUNING:
            return {ErrorChannel.DETUNING: (0.0, 1.0)}
        return {ErrorChannel.AREA: (1.0, 0.0), ErrorChannel.DETUNING: (0.0, 1.0)}


Channel = Union[ErrorChannel, str, Tuple[float, float]]


def _resolve(channel: Channel):
    """Map a channel or explicit (alpha, delta) direction to {key: direction}."""
    if isinstance(channel, tuple):
        alpha, delta = (float(x) for x in channel)
        return {channel: (alpha, delta)}, False
    ch = ErrorChannel(channel)
    return ch.directions, ch is ErrorChannel.BOTH


@dataclass
class OrderTerms:
    """Profile terms ``Otilde_n`` plus the raw amplitude series.

    ``amplitudes[n]`` is the order-n coefficient of the overlap with the
    target state and ``orthogonal[n]`` that of the orthogonal state, so that
    the infidelity is ``|sum_n orthogonal[n] eps^n|^2``.
    """

    values: Dict[int, float]
    amplitudes: np.ndarray = field(repr=False)
    orthogonal: np.ndarray = field(repr=False)

    def __getitem__(self, n: int) -> float:
        return self.values[n]


@dataclass(frozen=True)
class ConditionResiduals:
    detuning_residual: complex
    area_residual: complex


def kernel_e(traj: Trajectory, t, alpha: float, delta: float):
    """Diagonal element ``e(t)`` on the unperturbed trajectory (real)."""
    th = traj.theta(t)
    return -0.5 * (delta * np.cos(th) - alpha * traj.gamma_dot(t) * np.sin(th) ** 2)


def kernel_f(traj: Trajectory, t, alpha: float, delta: float):
    """Off-diagonal element ``f(t)`` coupling to the orthogonal solution."""
    th = traj.theta(t)
    gd = traj.gamma_dot(t)
    amp = delta * np.sin(th) + alpha * (0.5 * gd * np.sin(2.0 * th) - 1j * traj.theta_dot(t))
    return 0.5 * amp * np.exp(1j * traj.gamma(t))


class _Kernels:
    """e and f along one direction, expressed in the natural integration variable."""

    def __init__(self, traj: Trajectory, direction):
        self.traj = traj
        self.alpha, self.delta = direction
        self.in_theta = self.delta == 0.0
        if self.in_theta:
            self.lo, self.hi = 0.0, math.pi
        else:
            self.lo, self.hi = traj.schedule.window

    def __call__(self, x):
        """Return (e, f) at ``x`` (theta if ``in_theta`` else time)."""
        if self.in_theta:
            phase = self.traj.phase
            g = phase.slope(x)
            s = np.sin(x)
            e = 0.5 * self.alpha * g * s * s
            f = 0.5 * self.alpha * (0.5 * g * np.sin(2.0 * x) - 1j) * np.exp(1j * phase.value(x))
            return e, f
        return (
            kernel_e(self.traj, x, self.alpha, self.delta),
            kernel_f(self.traj, x, self.alpha, self.delta),
        )


def _cquad(func, a, b, epsrel=QUAD_EPSREL, epsabs=QUAD_EPSABS):
    # integrals that vanish at a root cannot meet a relative tolerance; QUADPACK
    # flags this as roundoff although the absolute error is at epsabs
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(func, a, b, complex_func=True, epsabs=epsabs, epsrel=epsrel, limit=500)
    return complex(val)


def _per_direction(traj, channel, compute):
    dirs, both = _resolve(channel)
    out = {key: compute(_Kernels(traj, d)) for key, d in dirs.items()}
    return out if both else next(iter(out.values()))


def second_order(traj: Trajectory, channel: Channel, epsrel: float = QUAD_EPSREL):
    """``Otilde_2 = -|int f|^2`` by adaptive quadrature.

    ``channel`` is an :class:`ErrorChannel` or an explicit ``(alpha, delta)``
    direction. ``BOTH`` returns a dict keyed by the two single channels.
    """

    def compute(k: _Kernels):
        if k.alpha == 0.0 and k.delta == 0.0:
            return 0.0
        return -abs(_cquad(lambda x: complex(k(x)[1]), k.lo, k.hi, epsrel=epsrel)) ** 2

    return _per_direction(traj, channel, compute)


def _cumulative(y, x):
    c = integrate.cumulative_simpson
    return c(y.real, x=x, initial=0.0) + 1j * c(y.imag, x=x, initial=0.0)


def _third_order_nested(k: _Kernels, n_grid: int) -> float:
    # -4 * int dt Im[conj f(t) int^t dt' e(t') int^t' dt'' f(t'')]
    x = np.linspace(k.lo, k.hi, n_grid)
    e, f = k(x)
    inner = _cumulative(f, x)
    middle = _cumulative(e * inner, x)
    outer = integrate.simpson((np.conj(f) * middle).imag, x=x)
    return -4.0 * float(outer)


def third_order(traj: Trajectory, channel: Channel, method: str = "hierarchy", n_grid: int = 2**17 + 1):
    """``Otilde_3``.

    ``method="hierarchy"`` reads it off :func:`hierarchy`; ``"quadrature"``
    evaluates the triple time-ordered integral
    ``-4 int int int Im[conj f(t) e(t') f(t'')]`` by nested composite Simpson
    rules on ``n_grid`` points.
    """
    if method == "hierarchy":
        dirs, both = _resolve(channel)
        out = {key: _hierarchy_one(_Kernels(traj, d), 3).values[3] for key, d in dirs.items()}
        return out if both else next(iter(out.values()))
    if method == "quadrature":
        return _per_direction(traj, channel, lambda k: _third_order_nested(k, n_grid))
    raise ValidationError(f"unknown method {method!r}")


def condition_residuals(
    p,
    s: ThetaSchedule = None,
    theta_i: float = 0.0,
    theta_f: float = math.pi,
    epsrel: float = QUAD_EPSREL,
) -> ConditionResiduals:
    """Second-order robustness integrals for detuning and area errors.

    ``detuning_residual = int e^{i gamma} sin(theta) dt`` over the schedule
    window, and ``area_residual = int_{theta_i}^{theta_f} e^{i gamma} sin^2
    dtheta - [e^{i gamma} sin(2 theta)]_{theta_f}^{theta_i} / 4``. Both
    vanish for a second-order robust design.
    """
    s = ThetaSchedule() if s is None else s
    lo, hi = s.window

    def det(t):
        th = s.theta(t)
        return cmath.exp(1j * p.value(th)) * math.sin(th)

    def area(th):
        return cmath.exp(1j * p.value(th)) * math.sin(th) ** 2

    def boundary(th):
        return cmath.exp(1j * p.value(float(th))) * math.sin(2.0 * th)

    detuning_residual = _cquad(det, lo, hi, epsrel=epsrel)
    area_residual = _cquad(area, theta_i, theta_f, epsrel=epsrel) - 0.25 * (boundary(theta_i) - boundary(theta_f))
    return ConditionResiduals(detuning_residual, area_residual)


def _hierarchy_one(k: _Kernels, max_order: int, rtol=HIERARCHY_RTOL, atol=HIERARCHY_ATOL) -> OrderTerms:
    n = max_order
    if k.alpha == 0.0 and k.delta == 0.0:
        a = np.zeros(n + 1, complex)
        a[0] = 1.0
        return OrderTerms({m: 0.0 for m in range(1, n + 1)}, a, np.zeros(n + 1, complex))

    def rhs(x, y):
        z = y.view(complex)
        a, b = z[:n], z[n:]
        e, f = k(x)
        e, f = float(e), complex(f)
        # a_0 = 1 and b_0 = 0 are not integrated
        a_prev = np.concatenate(([1.0 + 0j], a[:-1]))
        b_prev = np.concatenate(([0j], b[:-1]))
        dz = np.concatenate((-1j * (e * a_prev + f * b_prev), -1j * (np.conj(f) * a_prev - e * b_prev)))
        return dz.view(float)

    y0 = np.zeros(2 * n, complex).view(float)
    sol = integrate.solve_ivp(rhs, (k.lo, k.hi), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise ValidationError(f"hierarchy integration failed: {sol.message}")
    z = sol.y[:, -1].copy().view(complex)
    a = np.concatenate(([1.0 + 0j], z[:n]))
    b = np.concatenate(([0j], z[n:]))
    values = {}
    for m in range(1, n + 1):
        # sum_{j+k=m} conj(a_j) a_k in a fixed order
        values[m] = float(np.sum(np.conj(a[: m + 1]) * a[m::-1]).real)
    return OrderTerms(values, a, b)


def hierarchy(traj: Trajectory, channel: Channel, max_order: int = 4, rtol=HIERARCHY_RTOL, atol=HIERARCHY_ATOL):
    """Profile terms up to ``max_order`` from the interaction-picture hierarchy.

    Integrates ``a_0 = 1, b_0 = 0``,
    ``da_k = -i (e a_{k-1} + f b_{k-1})``, ``db_k = -i (conj(f) a_{k-1} - e b_{k-1})``
    and forms ``Otilde_n = sum_{j+k=n} conj(a_j) a_k``. This is the numerical
    equivalent of summing all time-ordered path diagrams of order n.
    """
    if int(max_order) != max_order or not 1 <= max_order <= MAX_ORDER:
        raise ValidationError(f"max_order must be an integer in [1, {MAX_ORDER}], got {max_order}")
    dirs, both = _resolve(channel)
    out = {key: _hierarchy_one(_Kernels(traj, d), int(max_order), rtol, atol) for key, d in dirs.items()}
    return out if both else next(iter(out.values()))
