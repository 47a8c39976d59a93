"""Fourier coefficients that make the excitation profile flat to a given order.

For a single error channel the infidelity is ``|sum_k b_k eps^k|^2`` with
``b_k`` the order-k amplitude on the orthogonal state, so robustness of odd
order ``2m + 1`` is equivalent to ``b_1 = ... = b_m = 0``. The reflection
symmetry of the Fourier families pins the phase of every ``b_k`` (it is real
times a known power of ``i``), leaving one real condition per amplitude and
hence one coefficient per condition:

* ``b_1`` is the second-order integral of the design (the area or detuning
  residual of :func:`~pulseforge.perturbation.condition_residuals`);
* ``b_2, b_3`` come from the perturbative hierarchy. Their vanishing is what
  makes ``Otilde_4 = -|b_2|^2`` and ``Otilde_6 = -|b_3|^2`` vanish, but unlike
  those squared terms they have simple roots, which Newton's method needs.

The mixed target (area and detuning, order 2) nullifies both second-order
integrals.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConvergenceError, SingularJacobianError, ValidationError
from .perturbation import (
    HIERARCHY_ATOL,
    HIERARCHY_RTOL,
    QUAD_EPSREL,
    ErrorChannel,
    condition_residuals,
    hierarchy,
)
from .trajectory import Family, PhaseParameterization, ThetaSchedule, Trajectory, pulse_area

SINGLE_CHANNEL_ORDERS = (3, 5, 7)
RESIDUAL_TOL = 1e-10
VERIFY_TOL = 1e-8
FD_STEP = 1e-6
MAX_ITER = 100
MAX_HALVINGS = 20
MAX_STEP = 0.5
# Newton iterates that wander this far are treated as divergent
COEFF_BOUND = 50.0

ORDER3_SEEDS = tuple(np.round(np.arange(-4.0, 0.0 + 1e-9, 0.25), 10))
MIXED_SEEDS = tuple(
    (float(c1), float(c2))
    for c1 in np.round(np.arange(-4.0, 0.0 + 1e-9, 0.5), 10)
    for c2 in np.round(np.arange(-2.0, 2.0 + 1e-9, 0.5), 10)
)


@dataclass(frozen=True)
class RobustnessTarget:
    """What to make robust, to which order, with which phase family."""

    channel: ErrorChannel
    order: int
    family: Family = Family.A

    def __post_init__(self):
        try:
            channel = ErrorChannel(self.channel)
        except ValueError:
            raise ValidationError(f"unknown channel {self.channel!r}") from None
        try:
            family = Family(self.family)
        except ValueError:
            raise ValidationError(f"family must be 'a' or 'b', got {self.family!r}") from None
        if int(self.order) != self.order:
            raise ValidationError(f"order must be an integer, got {self.order}")
        order = int(self.order)
        if channel is ErrorChannel.BOTH:
            if order != 2:
                raise ValidationError("the combined area+detuning target supports order 2 only")
        elif order not in SINGLE_CHANNEL_ORDERS:
            raise ValidationError(
                f"single-channel robustness order must be one of {SINGLE_CHANNEL_ORDERS} (odd, >= 3), got {order}"
            )
        object.__setattr__(self, "channel", channel)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "order", order)

    @property
    def n_coefficients(self) -> int:
        if self.channel is ErrorChannel.BOTH:
            return 2
        return (self.order - 1) // 2

    def to_dict(self) -> dict:
        return {"channel": self.channel.value, "order": self.order, "family": self.family.value}


@dataclass
class SolveReport:
    target: RobustnessTarget
    coefficients: List[float]
    residual_norm: float
    pulse_area: float
    iterations: int
    verified_orders: List[int] = field(default_factory=list)
    seed: Optional[List[float]] = None

    @property
    def phase(self) -> PhaseParameterization:
        return PhaseParameterization(self.target.family, tuple(self.coefficients))

    def to_dict(self) -> dict:
        return {
            "target": self.target.to_dict(),
            "coefficients": list(self.coefficients),
            "residual_norm": self.residual_norm,
            "pulse_area_over_pi": self.pulse_area / math.pi,
            "verified_orders": list(self.verified_orders),
            "iterations": self.iterations,
            "seed": None if self.seed is None else list(self.seed),
        }


def _free_phase(channel: ErrorChannel, family: Family, k: int) -> complex:
    """Phase of the order-k orthogonal amplitude that survives the family symmetry."""
    shift = 0 if family is Family.A else 1
    if channel is ErrorChannel.AREA:
        return 1j**shift
    return 1j ** (k - shift)


def _free(z: complex, phase: complex) -> float:
    return float((z * np.conj(phase)).real)


def _free_residual(z: complex, family: Family) -> float:
    # second-order integrals: family a leaves the real part, family b the imaginary part
    return float(z.real if family is Family.A else z.imag)


def residual_vector(
    target: RobustnessTarget,
    coeffs: Sequence[float],
    schedule: Optional[ThetaSchedule] = None,
    precision: float = 1.0,
) -> np.ndarray:
    """Real conditions whose common root is a design of the requested order.

    ``precision`` scales every quadrature and ODE tolerance (0.01 tightens
    them 100-fold).
    """
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if coeffs.shape != (target.n_coefficients,):
        raise ValidationError(f"target needs {target.n_coefficients} coefficients, got {len(coeffs)}")
    schedule = ThetaSchedule() if schedule is None else schedule
    p = PhaseParameterization(target.family, tuple(coeffs))
    res = condition_residuals(p, schedule, epsrel=QUAD_EPSREL * precision)
    if target.channel is ErrorChannel.BOTH:
        return np.array(
            [_free_residual(res.detuning_residual, target.family), _free_residual(res.area_residual, target.family)]
        )
    first = res.area_residual if target.channel is ErrorChannel.AREA else res.detuning_residual
    out = [_free_residual(first, target.family)]
    m = target.n_coefficients
    if m > 1:
        rtol = max(HIERARCHY_RTOL * precision, 100 * np.finfo(float).eps)
        terms = hierarchy(Trajectory(p, schedule), target.channel, m, rtol=rtol, atol=HIERARCHY_ATOL * precision)
        for k in range(2, m + 1):
            out.append(_free(terms.orthogonal[k], _free_phase(target.channel, target.family, k)))
    return np.array(out)


def verify_orders(target: RobustnessTarget, coeffs, schedule=None, tol: float = VERIFY_TOL) -> List[int]:
    """Orders m <= target order with ``|Otilde_m| < tol`` in every channel direction."""
    schedule = ThetaSchedule() if schedule is None else schedule
    traj = Trajectory(PhaseParameterization(target.family, tuple(coeffs)), schedule)
    terms = hierarchy(traj, target.channel, target.order)
    per_dir = list(terms.values()) if isinstance(terms, dict) else [terms]
    return [m for m in range(1, target.order + 1) if all(abs(t.values[m]) < tol for t in per_dir)]


def solve(
    target: RobustnessTarget,
    seed: Sequence[float],
    schedule: Optional[ThetaSchedule] = None,
    tol: float = RESIDUAL_TOL,
    max_iter: int = MAX_ITER,
    fd_step: float = FD_STEP,
    max_step: float = MAX_STEP,
    verify: bool = True,
) -> SolveReport:
    """Damped Newton iteration with a forward-difference Jacobian.

    Steps longer than ``max_step`` (max-norm) are shortened to it, then
    halved (at most 20 times) until the residual norm decreases. The cap
    keeps continuation seeds inside their basin: the residuals oscillate in
    the coefficients and a full Newton step can land on a distant root.

    Raises
    ------
    ConvergenceError
        Iteration limit reached, no decreasing step found, or divergence.
        ``last_iterate`` holds the final coefficients.
    SingularJacobianError
        The Jacobian is singular or numerically rank deficient.
    """
    x = np.atleast_1d(np.asarray(seed, dtype=float)).copy()
    if x.shape != (target.n_coefficients,):
        raise ValidationError(f"seed must have {target.n_coefficients} entries, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("seed must be finite")

    def F(c):
        return residual_vector(target, c, schedule)

    r = F(x)
    norm = float(np.linalg.norm(r))
    it = 0
    while norm >= tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"no convergence after {max_iter} iterations (|r| = {norm:.3g})", x.tolist(), norm, it
            )
        J = np.empty((len(x), len(x)))
        for j in range(len(x)):
            xp = x.copy()
            xp[j] += fd_step
            J[:, j] = (F(xp) - r) / fd_step
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise SingularJacobianError("singular Jacobian", x.tolist(), norm, it) from None
        if not np.all(np.isfinite(dx)) or np.linalg.cond(J) > 1e14:
            raise SingularJacobianError("numerically singular Jacobian", x.tolist(), norm, it)
        longest = np.max(np.abs(dx))
        if longest > max_step:
            dx *= max_step / longest
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            x_new = x + lam * dx
            if np.max(np.abs(x_new)) > COEFF_BOUND:
                lam *= 0.5
                continue
            r_new = F(x_new)
            norm_new = float(np.linalg.norm(r_new))
            if norm_new < norm:
                break
            lam *= 0.5
        else:
            raise ConvergenceError(f"damping failed to reduce |r| = {norm:.3g}", x.tolist(), norm, it)
        x, r, norm = x_new, r_new, norm_new
        it += 1
    p = PhaseParameterization(target.family, tuple(x))
    verified = verify_orders(target, x, schedule) if verify else []
    return SolveReport(
        target=target,
        coefficients=x.tolist(),
        residual_norm=norm,
        pulse_area=pulse_area(p),
        iterations=it,
        verified_orders=verified,
        seed=np.atleast_1d(np.asarray(seed, dtype=float)).tolist(),
    )


def _try_solve(args):
    target, seed, schedule = args
    try:
        return solve(target, seed, schedule, verify=False)
    except ConvergenceError:
        return None


def seed_sweep(
    target: RobustnessTarget,
    seeds: Sequence,
    schedule: Optional[ThetaSchedule] = None,
    workers: int = 1,
) -> SolveReport:
    """Solve from every seed and keep the root with the smallest pulse area.

    Ties go to the earliest seed, so the result does not depend on ``workers``.
    """
    jobs = [(target, np.atleast_1d(np.asarray(s, dtype=float)), schedule) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_try_solve, jobs))
    else:
        results = [_try_solve(j) for j in jobs]
    best = None
    for rep in results:
        if rep is not None and (best is None or rep.pulse_area < best.pulse_area - 1e-9):
            best = rep
    if best is None:
        raise ConvergenceError(f"no seed converged for target {target.to_dict()}")
    best.verified_orders = verify_orders(target, best.coefficients, schedule)
    return best


def continuation_seed(target: RobustnessTarget, schedule: Optional[ThetaSchedule] = None, workers: int = 1) -> List[float]:
    """Solution of the next lower order, padded with a zero coefficient."""
    if target.channel is ErrorChannel.BOTH or target.order < 5:
        raise ValidationError("continuation needs a single-channel target of order >= 5")
    lower = RobustnessTarget(target.channel, target.order - 2, target.family)
    return list(solve_target(lower, schedule, workers).coefficients) + [0.0]


def solve_target(target: RobustnessTarget, schedule: Optional[ThetaSchedule] = None, workers: int = 1) -> SolveReport:
    """Default strategy: seed sweep for order 3 and the mixed target, continuation above."""
    if target.channel is ErrorChannel.BOTH:
        return seed_sweep(target, MIXED_SEEDS, schedule, workers)
    if target.order == 3:
        return seed_sweep(target, ORDER3_SEEDS, schedule, workers)
    return solve(target, continuation_seed(target, schedule, workers), schedule)
