"""Schrodinger propagation under area and detuning errors, and profile scans.

With hbar = 1 the perturbed Hamiltonian is

    H = (1/2) [[-(Delta + delta), (1 + alpha) Omega],
               [(1 + alpha) Omega,  Delta + delta   ]]

and the system starts in state 1 at the left edge of the pulse window.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, interpolate

from .errors import PrecisionError, PulseForgeError, StiffnessError, ValidationError
from .perturbation import ErrorChannel
from .trajectory import PulseShape

RTOL = 1e-12
ATOL = 1e-14
INFIDELITY_FLOOR = 1e-14


@dataclass(frozen=True)
class ErrorPoint:
    alpha: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.delta)):
            raise ValidationError(f"error point must be finite, got ({self.alpha}, {self.delta})")


def _field_function(pulse: PulseShape):
    traj = pulse.trajectory
    if traj is not None:
        return traj.fields
    spline = interpolate.CubicSpline(pulse.t, np.column_stack([pulse.omega, pulse.delta]), bc_type="natural")
    return lambda t: tuple(spline(t))


def _solve(pulse: PulseShape, e: ErrorPoint, rtol: float, atol: float, dense_steps: bool):
    fields = _field_function(pulse)
    scale = 1.0 + e.alpha
    offset = e.delta

    def rhs(t, y):
        om, de = fields(t)
        om = 0.5 * scale * float(om)
        de = 0.5 * (float(de) + offset)
        p_re, p_im, q_re, q_im = y
        # i dp/dt = -de p + om q ;  i dq/dt = om p + de q
        return [
            -de * p_im + om * q_im,
            de * p_re - om * q_re,
            om * p_im + de * q_im,
            -om * p_re - de * q_re,
        ]

    t0, t1 = pulse.window
    sol = integrate.solve_ivp(
        rhs,
        (t0, t1),
        [1.0, 0.0, 0.0, 0.0],
        method="DOP853",
        rtol=rtol,
        atol=atol,
        t_eval=None if dense_steps else [t1],
    )
    if not sol.success:
        raise StiffnessError(f"integration failed at alpha={e.alpha}, delta={e.delta}: {sol.message}")
    return sol


def propagate(pulse: PulseShape, e: ErrorPoint = ErrorPoint(), rtol: float = RTOL, atol: float = ATOL):
    """Final state and population of state 2.

    Uses the analytic fields when the pulse carries its design provenance and
    a natural cubic spline through the samples otherwise.

    Returns
    -------
    psi : ndarray of complex, shape (2,)
    p2 : float
    """
    sol = _solve(pulse, e, rtol, atol, dense_steps=False)
    y = sol.y[:, -1]
    psi = np.array([y[0] + 1j * y[1], y[2] + 1j * y[3]])
    p2 = abs(psi[1]) ** 2
    if -1e-12 <= p2 < 0:
        p2 = 0.0
    return psi, float(min(p2, 1.0))


def infidelity(psi) -> float:
    """Population left in state 1; computed directly to avoid ``1 - p2`` cancellation."""
    return float(abs(psi[0]) ** 2)


def evolve(pulse: PulseShape, e: ErrorPoint = ErrorPoint(), rtol: float = RTOL, atol: float = ATOL):
    """State at every accepted integrator step: ``(times, states)``."""
    sol = _solve(pulse, e, rtol, atol, dense_steps=True)
    states = np.stack([sol.y[0] + 1j * sol.y[1], sol.y[2] + 1j * sol.y[3]], axis=1)
    return sol.t, states


def rabi_profile(alpha) -> np.ndarray:
    """Exact resonant pi-pulse transfer ``cos^2(pi alpha / 2)`` (no detuning)."""
    return np.cos(0.5 * np.pi * np.asarray(alpha, dtype=float)) ** 2


@dataclass
class ScanResult:
    """Row-major (alpha outer, delta inner) table of final populations."""

    alpha: np.ndarray
    delta: np.ndarray
    p2: np.ndarray
    infidelity: np.ndarray
    errors: Dict[int, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.p2)

    def log10_infidelity(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log10(self.infidelity)

    def to_csv(self, path, reference: Optional[np.ndarray] = None) -> None:
        """Write ``alpha,delta,p2,log10_infidelity`` (plus ``rabi_p2`` if given)."""
        header = ["alpha", "delta", "p2", "log10_infidelity"]
        if reference is not None:
            header.append("rabi_p2")
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            self._write(fh, header, reference)

    def _write(self, fh, header, reference):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        logs = self.log10_infidelity()
        for i in range(len(self)):
            row = [_fmt(self.alpha[i]), _fmt(self.delta[i]), _fmt(self.p2[i]), _fmt(logs[i])]
            if reference is not None:
                row.append(_fmt(reference[i]))
            writer.writerow(row)


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return f"{x:.12g}"


def _check_grid(name, grid):
    arr = np.atleast_1d(np.asarray(grid, dtype=float))
    if arr.size == 0:
        raise ValidationError(f"{name} grid is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} grid must be finite")
    if np.any(np.diff(arr) <= 0):
        raise ValidationError(f"{name} grid must be strictly increasing")
    return arr


def _point(args):
    pulse, alpha, delta = args
    try:
        psi, p2 = propagate(pulse, ErrorPoint(alpha, delta))
    except PulseForgeError as exc:
        return math.nan, math.nan, str(exc)
    return p2, infidelity(psi), None


def scan(pulse: PulseShape, alpha_grid: Sequence[float], delta_grid: Sequence[float], workers: Optional[int] = 1) -> ScanResult:
    """Propagate at every grid point.

    Failed points are reported as NaN with the message in ``errors``; the
    scan continues. ``workers > 1`` spreads points over processes; the
    result order does not depend on it.
    """
    alphas = _check_grid("alpha", alpha_grid)
    deltas = _check_grid("delta", delta_grid)
    aa, dd = (x.ravel() for x in np.meshgrid(alphas, deltas, indexing="ij"))
    jobs = [(pulse, float(a), float(d)) for a, d in zip(aa, dd)]
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_point(j) for j in jobs]
    p2 = np.array([r[0] for r in results])
    inf = np.array([r[1] for r in results])
    errors = {i: r[2] for i, r in enumerate(results) if r[2] is not None}
    return ScanResult(alpha=aa, delta=dd, p2=p2, infidelity=inf, errors=errors)


def scaling_exponent(
    pulse: PulseShape,
    channel=ErrorChannel.AREA,
    error_range: Tuple[float, float] = (1e-3, 1e-2),
    n_points: int = 8,
    floor: float = INFIDELITY_FLOOR,
) -> float:
    """Log-log slope of the infidelity against the error size.

    Raises :class:`PrecisionError` when an infidelity falls below ``floor``;
    move ``error_range`` to larger errors in that case.
    """
    channel = ErrorChannel(channel)
    if channel is ErrorChannel.BOTH:
        raise ValidationError("scaling_exponent needs a single error channel")
    lo, hi = error_range
    if not 0 < lo < hi:
        raise ValidationError(f"error_range must satisfy 0 < lo < hi, got {error_range}")
    errs = np.logspace(math.log10(lo), math.log10(hi), n_points)
    infs = []
    for x in errs:
        pt = ErrorPoint(alpha=x) if channel is ErrorChannel.AREA else ErrorPoint(delta=x)
        psi, _ = propagate(pulse, pt)
        infs.append(infidelity(psi))
    infs = np.asarray(infs)
    if np.any(infs < floor):
        raise PrecisionError(
            f"infidelity {infs.min():.3g} below floor {floor:g} in range {error_range}; widen the error range"
        )
    slope, _ = np.polyfit(np.log10(errs), np.log10(infs), 1)
    return float(slope)
