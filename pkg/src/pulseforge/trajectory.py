"""Phase parameterizations, the erf schedule and pulse synthesis.

A design is a curve on the Bloch sphere: the polar angle ``theta`` sweeps
monotonically from the north pole (state 1) to the south pole (state 2)
following an erf schedule in time, and the global phase is prescribed as a
function of ``theta`` by a truncated Fourier sine series,

    gamma(theta) = k * theta + sum_n C_n sin(2 n theta),   k = 2 (family a), 1 (family b).

The azimuth follows from ``cot(phi) = sin(theta) * dgamma/dtheta`` and the
Rabi frequency and detuning that drive the system along this curve are
obtained in closed form (see :func:`synthesize`).

All times are in units of the schedule scale ``T`` and all rates in ``1/T``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError, InfiniteTimeError, ValidationError

MAX_FOURIER_ORDER = 8

_THETA_SLACK = 1e-12


class Family(str, Enum):
    """Fourier phase family; the value is the linear slope of the phase."""

    A = "a"
    B = "b"

    @property
    def slope(self) -> int:
        return 2 if self is Family.A else 1

    @property
    def final_phase(self) -> float:
        return self.slope * math.pi


@dataclass(frozen=True)
class PhaseParameterization:
    """Global phase as a function of the polar angle.

    Parameters
    ----------
    family : Family or str
        ``"a"`` for slope 2 (final phase 2 pi) or ``"b"`` for slope 1
        (final phase pi).
    coefficients : sequence of float
        Fourier sine coefficients ``C_1 .. C_N`` with ``N <= 8``.
    """

    family: Family
    coefficients: tuple = ()

    def __post_init__(self):
        try:
            fam = Family(self.family)
        except ValueError:
            raise ValidationError(f"family must be 'a' or 'b', got {self.family!r}") from None
        try:
            coeffs = tuple(float(c) for c in np.atleast_1d(np.asarray(self.coefficients, dtype=float)))
        except (TypeError, ValueError):
            raise ValidationError(f"coefficients must be real numbers, got {self.coefficients!r}") from None
        if not all(math.isfinite(c) for c in coeffs):
            raise ValidationError(f"coefficients must be finite, got {coeffs}")
        if len(coeffs) > MAX_FOURIER_ORDER:
            raise ValidationError(f"at most {MAX_FOURIER_ORDER} Fourier coefficients are supported")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def _harmonics(self):
        n = np.arange(1, len(self.coefficients) + 1, dtype=float)
        return n, np.asarray(self.coefficients, dtype=float)

    # The three methods below are vectorized and skip domain checks; they are
    # the hot path of quadratures and ODE right-hand sides.

    def value(self, theta):
        """gamma(theta)."""
        if isinstance(theta, float):
            return self.family.slope * theta + sum(
                c * math.sin(2.0 * n * theta) for n, c in enumerate(self.coefficients, 1)
            )
        theta = np.asarray(theta, dtype=float)
        n, c = self._harmonics
        return self.family.slope * theta + np.sin(2.0 * np.multiply.outer(theta, n)) @ c

    def slope(self, theta):
        """dgamma/dtheta."""
        if isinstance(theta, float):
            return self.family.slope + sum(
                2.0 * n * c * math.cos(2.0 * n * theta) for n, c in enumerate(self.coefficients, 1)
            )
        theta = np.asarray(theta, dtype=float)
        n, c = self._harmonics
        return self.family.slope + np.cos(2.0 * np.multiply.outer(theta, n)) @ (2.0 * n * c)

    def curvature(self, theta):
        """d^2 gamma / dtheta^2."""
        theta = np.asarray(theta, dtype=float)
        n, c = self._harmonics
        return np.sin(2.0 * np.multiply.outer(theta, n)) @ (-4.0 * n * n * c)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "coefficients": list(self.coefficients)}


def meridian() -> "_ConstantPhase":
    """Constant global phase: the resonant Rabi pi-pulse trajectory."""
    return _ConstantPhase()


@dataclass(frozen=True)
class _ConstantPhase:
    """Phase with zero slope (phi = pi/2, zero detuning)."""

    offset: float = math.pi / 2

    def value(self, theta):
        return np.full_like(np.asarray(theta, dtype=float), self.offset)

    def slope(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float))

    def curvature(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class ThetaSchedule:
    """erf map ``theta(t) = pi (erf(t/T) + 1) / 2`` on the window ``[-t_max, t_max]``.

    ``t_max`` defaults to ``4 T``, where the polar angle is within about
    ``2.4e-8`` of the poles.
    """

    T: float = 1.0
    t_max: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValidationError(f"T must be positive and finite, got {self.T}")
        t_max = 4.0 * self.T if self.t_max is None else float(self.t_max)
        if not (math.isfinite(t_max) and t_max > 0):
            raise ValidationError(f"t_max must be positive and finite, got {self.t_max}")
        object.__setattr__(self, "t_max", t_max)

    @property
    def window(self):
        return (-self.t_max, self.t_max)

    def theta(self, t):
        # erfc keeps full relative precision close to either pole
        if isinstance(t, float):
            x = t / self.T
            return 0.5 * math.pi * math.erfc(-x) if x <= 0 else math.pi - 0.5 * math.pi * math.erfc(x)
        x = np.asarray(t, dtype=float) / self.T
        return np.where(x <= 0, 0.5 * np.pi * special.erfc(-x), np.pi - 0.5 * np.pi * special.erfc(x))

    def theta_dot(self, t):
        if isinstance(t, float):
            return math.sqrt(math.pi) / self.T * math.exp(-((t / self.T) ** 2))
        x = np.asarray(t, dtype=float) / self.T
        return math.sqrt(math.pi) / self.T * np.exp(-x * x)

    def t_of_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta <= 0) or np.any(theta >= np.pi):
            raise InfiniteTimeError("theta = 0 and theta = pi are reached only at infinite time")
        lower = theta <= 0.5 * np.pi
        out = np.where(
            lower,
            -special.erfcinv(np.where(lower, 2.0 * theta / np.pi, 1.0)),
            special.erfcinv(np.where(lower, 1.0, 2.0 * (np.pi - theta) / np.pi)),
        )
        return self.T * out

    def to_dict(self) -> dict:
        return {"T": self.T, "t_max": self.t_max}


def _check_theta(theta):
    arr = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < -_THETA_SLACK) or np.any(arr > np.pi + _THETA_SLACK):
        raise DomainError(f"theta must lie in [0, pi], got {theta}")
    return np.clip(arr, 0.0, np.pi)


def eval_phase(p: PhaseParameterization, theta):
    """Global phase gamma(theta); raises :class:`DomainError` outside ``[0, pi]``."""
    return p.value(_check_theta(theta))


def eval_phase_derivative(p: PhaseParameterization, theta):
    """Slope dgamma/dtheta; raises :class:`DomainError` outside ``[0, pi]``."""
    return p.slope(_check_theta(theta))


def theta_of_t(s: ThetaSchedule, t):
    arr = np.asarray(t, dtype=float)
    if np.any(np.abs(arr) > s.t_max * (1 + 1e-12)):
        raise DomainError(f"|t| must not exceed t_max = {s.t_max}")
    return s.theta(arr)


def t_of_theta(s: ThetaSchedule, theta):
    return s.t_of_theta(theta)


def _azimuth(phase, theta):
    # arccot on the (0, pi) branch
    return 0.5 * np.pi - np.arctan(np.sin(theta) * phase.slope(theta))


def phi_of_theta(p, theta):
    """Azimuth ``phi = arccot(sin(theta) dgamma/dtheta)`` on the branch ``(0, pi)``."""
    return _azimuth(p, _check_theta(theta))


@dataclass(frozen=True)
class Trajectory:
    """A phase parameterization bound to a schedule.

    ``phase`` may be any object exposing vectorized ``value``, ``slope`` and
    ``curvature`` methods of theta; :class:`PhaseParameterization` is the
    usual choice.
    """

    phase: object
    schedule: ThetaSchedule = field(default_factory=ThetaSchedule)

    def theta(self, t):
        return self.schedule.theta(t)

    def theta_dot(self, t):
        return self.schedule.theta_dot(t)

    def gamma(self, t):
        return self.phase.value(self.theta(t))

    def gamma_dot(self, t):
        return self.theta_dot(t) * self.phase.slope(self.theta(t))

    def phi(self, t):
        return _azimuth(self.phase, self.theta(t))

    def omega(self, t):
        th = self.theta(t)
        g = self.phase.slope(th)
        return self.theta_dot(t) * np.sqrt(1.0 + (g * np.sin(th)) ** 2)

    def delta(self, t):
        th = self.theta(t)
        g = self.phase.slope(th)
        gp = self.phase.curvature(th)
        s, c = np.sin(th), np.cos(th)
        return -self.theta_dot(t) * ((g * c + gp * s) / (1.0 + (g * s) ** 2) + g * c)

    def fields(self, t):
        """Rabi frequency and detuning at ``t`` (shares the theta evaluation)."""
        th = self.theta(t)
        thd = self.theta_dot(t)
        g = self.phase.slope(th)
        gp = self.phase.curvature(th)
        s, c = np.sin(th), np.cos(th)
        u2 = 1.0 + (g * s) ** 2
        return thd * np.sqrt(u2), -thd * ((g * c + gp * s) / u2 + g * c)


@dataclass(frozen=True)
class BlochState:
    theta: float
    phi: float
    gamma: float = 0.0


def state_vector(b: BlochState) -> np.ndarray:
    """Amplitudes ``[e^{i phi/2} cos(theta/2), e^{-i phi/2} sin(theta/2)] e^{-i gamma/2}``."""
    theta = float(_check_theta(b.theta))
    half = 0.5 * theta
    return np.exp(-0.5j * b.gamma) * np.array(
        [np.exp(0.5j * b.phi) * math.cos(half), np.exp(-0.5j * b.phi) * math.sin(half)]
    )


@dataclass
class PulseShape:
    """Sampled Rabi frequency and detuning on a uniform time grid.

    ``phase`` and ``schedule`` record how the pulse was generated; pulses
    read back from a CSV without a sidecar have neither.
    """

    t: np.ndarray
    omega: np.ndarray
    delta: np.ndarray
    area: float
    phase: Optional[PhaseParameterization] = None
    schedule: Optional[ThetaSchedule] = None

    @property
    def trajectory(self) -> Optional[Trajectory]:
        if self.phase is None or self.schedule is None:
            return None
        return Trajectory(self.phase, self.schedule)

    @property
    def window(self):
        return float(self.t[0]), float(self.t[-1])

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "omega", "delta"])
            for row in zip(self.t, self.omega, self.delta):
                writer.writerow([repr(float(v)) for v in row])

    def sidecar(self) -> dict:
        out = {}
        if self.phase is not None:
            out.update(self.phase.to_dict())
        if self.schedule is not None:
            out.update(self.schedule.to_dict())
        out["n_samples"] = len(self.t)
        out["area"] = self.area
        out["area_over_pi"] = self.area / math.pi
        return out


def synthesize(p, s: Optional[ThetaSchedule] = None, n_samples: int = 4001) -> PulseShape:
    """Rabi frequency and detuning that steer state 1 along the designed curve.

    With ``g = dgamma/dtheta`` and ``g' = d^2gamma/dtheta^2``::

        Omega = theta_dot sqrt(1 + g^2 sin^2 theta)
        Delta = -theta_dot [(g cos theta + g' sin theta) / (1 + g^2 sin^2 theta) + g cos theta]

    The closed form for Delta is finite at the poles, where the cot(theta)
    term of the azimuth equation cancels.
    """
    s = ThetaSchedule() if s is None else s
    if int(n_samples) != n_samples or n_samples < 2:
        raise ValidationError(f"n_samples must be an integer >= 2, got {n_samples}")
    if isinstance(p, PhaseParameterization):
        coeffs = np.asarray(p.coefficients, dtype=float)
        if not np.all(np.isfinite(coeffs)):
            raise ValidationError("coefficients must be finite")
    t = np.linspace(-s.t_max, s.t_max, int(n_samples))
    omega, delta = Trajectory(p, s).fields(t)
    omega = np.maximum(omega, 0.0)
    area = float(integrate.trapezoid(omega, t))
    return PulseShape(t=t, omega=omega, delta=delta, area=area, phase=p, schedule=s)


def pulse_area(p, epsrel: float = 1e-11) -> float:
    """Pulse area ``int_0^pi sqrt(1 + g^2 sin^2 theta) dtheta`` (schedule independent)."""

    def integrand(th):
        return math.sqrt(1.0 + (float(p.slope(th)) * math.sin(th)) ** 2)

    val, _ = integrate.quad(integrand, 0.0, math.pi, epsabs=0.0, epsrel=epsrel, limit=400)
    return val


# ---------------------------------------------------------------------------
# file I/O


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_pulse(pulse: PulseShape, path, config: Optional[dict] = None) -> Path:
    """Write the pulse CSV and its JSON sidecar; returns the sidecar path."""
    path = Path(path)
    pulse.to_csv(path)
    meta = pulse.sidecar()
    if config is not None:
        meta["config"] = config
    side = sidecar_path(path)
    side.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return side


def read_pulse(path, with_provenance: bool = False) -> PulseShape:
    """Load a pulse CSV (header ``t,omega,delta``).

    The sidecar, when present, supplies the area; provenance is attached only
    if ``with_provenance`` is set, so that by default propagation uses the
    sampled data.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "omega", "delta"]:
            raise ValidationError(f"{path}: expected header 't,omega,delta', got {header}")
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValidationError(f"{path}: need at least two samples")
    t, omega, delta = data.T
    if np.any(np.diff(t) <= 0):
        raise ValidationError(f"{path}: time grid must be strictly increasing")
    area = float(integrate.trapezoid(omega, t))
    phase = schedule = None
    side = sidecar_path(path)
    if with_provenance and side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
        phase = PhaseParameterization(meta["family"], tuple(meta["coefficients"]))
        schedule = ThetaSchedule(meta["T"], meta["t_max"])
    return PulseShape(t=t, omega=omega, delta=delta, area=area, phase=phase, schedule=schedule)


def count_interior_maxima(values: Sequence[float]) -> int:
    """Number of strict interior local maxima of a sampled curve."""
    v = np.asarray(values, dtype=float)
    return int(np.count_nonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])))
