"""Command-line front end: ``pulseforge {design,solve,scan,area,verify}``.

Every command is driven by a run config (a JSON-serializable dataclass).
Flags fill the config; ``--config FILE`` loads one and explicit flags
override its entries. Output files carry the config that produced them.

Exit codes: 0 ok, 1 invalid input, 2 I/O failure, 3 no convergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import ConvergenceError, PulseForgeError, ValidationError
from .propagator import ErrorPoint, propagate, rabi_profile, scan
from .solver import RobustnessTarget, solve, solve_target
from .trajectory import (
    PhaseParameterization,
    ThetaSchedule,
    meridian,
    pulse_area,
    read_pulse,
    sidecar_path,
    synthesize,
    write_pulse,
)

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_CONVERGENCE = 0, 1, 2, 3
THREADS_ENV = "PULSEFORGE_THREADS"


# ---------------------------------------------------------------------------
# run configs


class _Config:
    @classmethod
    def from_dict(cls, data: dict):
        if not isinstance(data, dict):
            raise ValidationError(f"{cls.__name__} must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValidationError(f"unknown config keys for {cls.command}: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {"command": self.command, **dataclasses.asdict(self)}


@dataclass
class DesignConfig(_Config):
    command = "design"
    family: str = "a"
    coefficients: List[float] = field(default_factory=list)
    T: float = 1.0
    t_max: Optional[float] = None
    n_samples: int = 4001
    out: str = "pulse.csv"


@dataclass
class SolveConfig(_Config):
    command = "solve"
    channel: str = "area"
    order: int = 3
    family: str = "a"
    seed: Optional[List[float]] = None
    T: float = 1.0
    t_max: Optional[float] = None
    threads: Optional[int] = None
    out: Optional[str] = None


@dataclass
class ScanConfig(_Config):
    command = "scan"
    pulse: str = "pulse.csv"
    alpha: str = "0"
    delta: str = "0"
    rabi: bool = False
    threads: Optional[int] = None
    out: str = "scan.csv"


@dataclass
class AreaConfig(_Config):
    command = "area"
    family: str = "a"
    coefficients: List[float] = field(default_factory=list)


@dataclass
class VerifyConfig(_Config):
    command = "verify"
    solve: bool = True
    threads: Optional[int] = None
    out: Optional[str] = None


CONFIGS = {c.command: c for c in (DesignConfig, SolveConfig, ScanConfig, AreaConfig, VerifyConfig)}


# ---------------------------------------------------------------------------
# flag parsing helpers


def parse_grid(text: str, name: str = "grid") -> np.ndarray:
    """``lo:hi:step`` (inclusive, step count rounded to the nearest integer) or a single value."""
    parts = str(text).split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ValidationError(f"--{name}: expected 'lo:hi:step' or a number, got {text!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise ValidationError(f"--{name}: values must be finite, got {text!r}")
    if len(values) == 1:
        return np.array(values)
    if len(values) != 3:
        raise ValidationError(f"--{name}: expected 'lo:hi:step', got {text!r}")
    lo, hi, step = values
    if step <= 0 or hi < lo:
        raise ValidationError(f"--{name}: need hi >= lo and step > 0, got {text!r}")
    n = int(round((hi - lo) / step))
    if n == 0:
        return np.array([lo])
    return np.linspace(lo, hi, n + 1)


def parse_floats(text: str, name: str) -> List[float]:
    if text is None or str(text).strip() == "":
        return []
    try:
        values = [float(x) for x in str(text).split(",")]
    except ValueError:
        raise ValidationError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise ValidationError(f"--{name}: values must be finite, got {text!r}")
    return values


def resolve_threads(flag: Optional[int]) -> int:
    env = os.environ.get(THREADS_ENV)
    if env not in (None, ""):
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
    elif flag is not None:
        value = int(flag)
    else:
        return os.cpu_count() or 1
    if value < 1:
        raise ValidationError(f"thread count must be >= 1, got {value}")
    return value


def _schedule(T, t_max) -> ThetaSchedule:
    return ThetaSchedule(float(T), None if t_max is None else float(t_max))


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_design(cfg: DesignConfig) -> int:
    phase = PhaseParameterization(cfg.family, tuple(cfg.coefficients))
    pulse = synthesize(phase, _schedule(cfg.T, cfg.t_max), cfg.n_samples)
    write_pulse(pulse, cfg.out, config=cfg.to_dict())
    print(f"{pulse_area(phase) / math.pi:.4f}")
    return EXIT_OK


def cmd_solve(cfg: SolveConfig) -> int:
    target = RobustnessTarget(cfg.channel, cfg.order, cfg.family)
    schedule = _schedule(cfg.T, cfg.t_max)
    if cfg.seed is not None:
        report = solve(target, cfg.seed, schedule)
    else:
        report = solve_target(target, schedule, workers=resolve_threads(cfg.threads))
    payload = {**report.to_dict(), "config": cfg.to_dict()}
    text = json.dumps(payload, indent=2)
    if cfg.out:
        Path(cfg.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def _rabi_column(alphas, deltas) -> np.ndarray:
    out = np.empty(len(alphas))
    baseline = None
    for i, (a, d) in enumerate(zip(alphas, deltas)):
        if d == 0.0:
            out[i] = rabi_profile(a)
        else:
            if baseline is None:
                baseline = synthesize(meridian(), ThetaSchedule(1.0, 6.0))
            out[i] = propagate(baseline, ErrorPoint(a, d))[1]
    return out


def cmd_scan(cfg: ScanConfig) -> int:
    alphas = parse_grid(cfg.alpha, "alpha")
    deltas = parse_grid(cfg.delta, "delta")
    pulse = read_pulse(cfg.pulse)
    result = scan(pulse, alphas, deltas, workers=resolve_threads(cfg.threads))
    reference = _rabi_column(result.alpha, result.delta) if cfg.rabi else None
    result.to_csv(cfg.out, reference)
    meta = {"config": cfg.to_dict(), "n_rows": len(result), "failed_points": {str(k): v for k, v in result.errors.items()}}
    _write_json(sidecar_path(cfg.out), meta)
    for idx, msg in result.errors.items():
        print(f"warning: point {idx} failed: {msg}", file=sys.stderr)
    print(f"wrote {len(result)} rows to {cfg.out}")
    return EXIT_OK


def cmd_area(cfg: AreaConfig) -> int:
    phase = PhaseParameterization(cfg.family, tuple(cfg.coefficients))
    print(f"{pulse_area(phase) / math.pi:.4f}")
    return EXIT_OK


def cmd_verify(cfg: VerifyConfig) -> int:
    from . import verify

    checks = verify.run_all(solve=cfg.solve, workers=resolve_threads(cfg.threads))
    print(verify.format_table(checks))
    if cfg.out:
        _write_json(
            cfg.out,
            {"config": cfg.to_dict(), "checks": [dataclasses.asdict(c) for c in checks]},
        )
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VALIDATION


COMMANDS = {"design": cmd_design, "solve": cmd_solve, "scan": cmd_scan, "area": cmd_area, "verify": cmd_verify}


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pulseforge", description="Robust shaped pulses for two-level population inversion.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON run config; explicit flags override its entries")

    p = sub.add_parser("design", help="synthesize a pulse and write CSV + JSON sidecar")
    common(p)
    p.add_argument("--family", choices=["a", "b"])
    p.add_argument("--coeffs", help="comma-separated Fourier coefficients C1,C2,...")
    p.add_argument("--T", type=float, dest="T")
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--n-samples", type=int, dest="n_samples")
    p.add_argument("--out")

    p = sub.add_parser("solve", help="find coefficients for a robustness target")
    common(p)
    p.add_argument("--channel", choices=["area", "detuning", "both"])
    p.add_argument("--order", type=int)
    p.add_argument("--family", choices=["a", "b"])
    p.add_argument("--seed", help="comma-separated starting coefficients (default: built-in strategy)")
    p.add_argument("--T", type=float, dest="T")
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="also write the report JSON here")

    p = sub.add_parser("scan", help="excitation profile over an (alpha, delta) grid")
    common(p)
    p.add_argument("--pulse", help="pulse CSV written by 'design'")
    p.add_argument("--alpha", help="lo:hi:step or a single value")
    p.add_argument("--delta", help="lo:hi:step or a single value")
    p.add_argument("--rabi", action="store_true", default=None, help="add the resonant pi-pulse reference column")
    p.add_argument("--threads", type=int)
    p.add_argument("--out")

    p = sub.add_parser("area", help="pulse area (x pi) of a phase parameterization")
    common(p)
    p.add_argument("--family", choices=["a", "b"])
    p.add_argument("--coeffs")

    p = sub.add_parser("verify", help="run the reference-table and invariant checks")
    common(p)
    p.add_argument("--no-solve", dest="solve", action="store_false", default=None, help="skip the Newton reproductions")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="write the results as JSON")
    return parser


def _load_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must be a JSON object")
    return data


def config_from_args(args) -> _Config:
    cls = CONFIGS[args.command]
    data = {}
    if getattr(args, "config", None):
        data = _load_config_file(args.config)
        command = data.pop("command", args.command)
        if command != args.command:
            raise ValidationError(f"config is for '{command}', not '{args.command}'")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    if "coeffs" in flags:
        flags["coefficients"] = parse_floats(flags.pop("coeffs"), "coeffs")
    if "seed" in flags:
        flags["seed"] = parse_floats(flags["seed"], "seed")
    data.update(flags)
    cfg = cls.from_dict(data)
    # fail early on malformed grids so nothing is written
    if isinstance(cfg, ScanConfig):
        parse_grid(cfg.alpha, "alpha")
        parse_grid(cfg.delta, "delta")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.last_iterate is not None:
            print(f"last iterate: {exc.last_iterate}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValidationError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
