"""Batch command-line front end.

Every command writes one output file atomically and prints a one-line
summary.  Exit status is 0 on success, 1 when a library routine fails and
2 for an invalid command line or configuration.

Relative output paths are resolved against ``$COUPLED_ESCAPE_OUTPUT_DIR``
when that variable is set.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import EscapeError
from .forman import DEFAULT_WINDOWS, EXCLUSION, fit_critical_exponent, negative_eigenvalue, prefactor
from .io import write_json, write_table
from .langevin import LatticeConfig, escape_statistics
from .model import Instanton, ModelParams, barrier, critical_length

OUTPUT_DIR_ENV = "COUPLED_ESCAPE_OUTPUT_DIR"
COMMANDS = ("instanton", "barrier", "prefactor", "sweep", "simulate", "fit")

COLUMNS = {
    "instanton": ("z", "phi1", "phi2"),
    "barrier": ("L", "delta_e", "regime"),
    "prefactor": ("L", "gamma0", "lambda_neg", "regime"),
    "sweep": ("L", "delta_e", "gamma0", "lambda_neg", "regime"),
    "simulate": ("run_index", "first_passage_time", "censored"),
    "fit": ("side", "slope", "intercept", "window_lo", "window_hi", "n_points"),
}


class UsageError(ValueError):
    """Invalid command line or configuration (exit status 2)."""


@dataclass(frozen=True)
class LengthRange:
    l_min: float
    l_max: float
    n: int

    def __post_init__(self) -> None:
        if not 0.0 < self.l_min < self.l_max:
            raise UsageError("need 0 < --l-min < --l-max")
        if self.n < 2:
            raise UsageError("need --n >= 2")

    def values(self) -> np.ndarray:
        return np.linspace(self.l_min, self.l_max, self.n)


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: ModelParams
    output_path: Path
    format: str = "csv"
    ranges: Optional[LengthRange] = None
    lattice: Optional[LatticeConfig] = None
    jobs: int = 1
    length: Optional[float] = None
    m: Optional[float] = None
    points: int = 512
    runs: int = 100
    side: str = "above"
    window: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.format not in ("csv", "json"):
            raise UsageError(f"unknown format {self.format!r}")
        if self.command in ("barrier", "prefactor", "sweep") and self.ranges is None:
            raise UsageError(f"{self.command} needs --l-min, --l-max and --n")
        if self.command == "simulate" and self.lattice is None:
            raise UsageError("simulate needs a lattice configuration")
        if self.command == "instanton" and (self.length is None) == (self.m is None):
            raise UsageError("instanton needs exactly one of --L and --m")
        if self.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        if self.runs < 1:
            raise UsageError("--runs must be at least 1")


def version_string() -> str:
    """Package version, plus the git commit when run from a checkout."""
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return __version__
    tag = rev.stdout.strip()
    return f"{__version__}+g{tag}" if rev.returncode == 0 and tag else __version__


def _regime(L: float, lc: float) -> str:
    return "below" if L < lc else "above"


def _prefactor_row(L: float, p: ModelParams) -> tuple[float, float]:
    return prefactor(L, p), negative_eigenvalue(L, p)


def _map(fn, items, jobs: int) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    # map preserves input order whatever the completion order
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _resolved_lengths(cfg: RunConfig) -> list[float]:
    lc = critical_length(cfg.params)
    return [float(L) for L in cfg.ranges.values() if abs(L - lc) > EXCLUSION]


def _cmd_instanton(cfg: RunConfig) -> str:
    p = cfg.params
    inst = (Instanton.from_length(cfg.length, p) if cfg.length is not None
            else Instanton.from_m(cfg.m, p))
    f = inst.sample(cfg.points)
    rows = [(float(z), float(a), float(b)) for z, a, b in zip(f.z, f.phi1, f.phi2)]
    write_table(cfg.output_path, COLUMNS["instanton"], rows, cfg.format)
    return f"instanton m={inst.m:.6g} L={inst.L:.6g}: {len(rows)} points"


def _cmd_barrier(cfg: RunConfig) -> str:
    p = cfg.params
    lc = critical_length(p)
    rows = [(float(L), barrier(float(L), p), _regime(L, lc)) for L in cfg.ranges.values()]
    write_table(cfg.output_path, COLUMNS["barrier"], rows, cfg.format)
    return f"barrier: {len(rows)} lengths, L_c={lc:.6g}"


def _cmd_prefactor(cfg: RunConfig) -> str:
    p = cfg.params
    lc = critical_length(p)
    lengths = _resolved_lengths(cfg)
    out = _map(partial(_prefactor_row, p=p), lengths, cfg.jobs)
    rows = [(L, g, lam, _regime(L, lc)) for L, (g, lam) in zip(lengths, out)]
    write_table(cfg.output_path, COLUMNS["prefactor"], rows, cfg.format)
    return f"prefactor: {len(rows)} lengths, L_c={lc:.6g}"


def _cmd_sweep(cfg: RunConfig) -> str:
    p = cfg.params
    lc = critical_length(p)
    lengths = _resolved_lengths(cfg)
    out = _map(partial(_prefactor_row, p=p), lengths, cfg.jobs)
    rows = [(L, barrier(L, p), g, lam, _regime(L, lc)) for L, (g, lam) in zip(lengths, out)]
    write_table(cfg.output_path, COLUMNS["sweep"], rows, cfg.format)
    return f"sweep: {len(rows)} lengths, L_c={lc:.6g}"


def manifest_path(output_path: Path) -> Path:
    return output_path.with_name(output_path.stem + ".manifest.json")


def _cmd_simulate(cfg: RunConfig) -> str:
    start = time.perf_counter()
    stats = escape_statistics(cfg.lattice, cfg.params, cfg.runs, cfg.jobs)
    wall = time.perf_counter() - start
    rows = [(k, t, c) for k, (t, c) in enumerate(zip(stats.first_passage_times, stats.censored))]
    write_table(cfg.output_path, COLUMNS["simulate"], rows, cfg.format)
    write_json(manifest_path(cfg.output_path), {
        "lattice": asdict(cfg.lattice),
        "params": asdict(cfg.params),
        "n_runs": cfg.runs,
        "version": version_string(),
        "wall_time": wall,
    })
    return (f"simulate: {cfg.runs} runs, mean first passage {stats.mean:.6g} "
            f"+- {stats.stderr:.3g}, {sum(stats.censored)} censored")


def _cmd_fit(cfg: RunConfig) -> str:
    window = cfg.window or DEFAULT_WINDOWS[cfg.side]
    fit = fit_critical_exponent(cfg.params, cfg.side, window, cfg.points)
    record = {"side": cfg.side, "slope": fit.slope, "intercept": fit.intercept,
              "window_lo": window[0], "window_hi": window[1], "n_points": cfg.points}
    if cfg.format == "json":
        write_json(cfg.output_path, record)
    else:
        write_table(cfg.output_path, COLUMNS["fit"], [[record[c] for c in COLUMNS["fit"]]], "csv")
    return f"fit {cfg.side}: slope={fit.slope:.6g} intercept={fit.intercept:.6g}"


_HANDLERS = {
    "instanton": _cmd_instanton,
    "barrier": _cmd_barrier,
    "prefactor": _cmd_prefactor,
    "sweep": _cmd_sweep,
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    try:
        summary = _HANDLERS[cfg.command](cfg)
    except (EscapeError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{summary} -> {cfg.output_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mu1", type=float, default=3.0, help="curvature of field 1 (default 3)")
    common.add_argument("--mu2", type=float, default=2.0, help="curvature of field 2 (default 2)")
    common.add_argument("-o", "--output", help="output file (default <command>.<format>)")
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help="output format (default csv, json for fit)")

    ranged = argparse.ArgumentParser(add_help=False)
    ranged.add_argument("--l-min", type=float, required=True)
    ranged.add_argument("--l-max", type=float, required=True)
    ranged.add_argument("--n", type=int, default=100, help="number of lengths (default 100)")

    pooled = argparse.ArgumentParser(add_help=False)
    pooled.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    parser = argparse.ArgumentParser(
        prog="coupled-escape",
        description="Escape barriers, rate prefactors and Langevin first-passage runs "
                    "for two coupled fields on an interval with Neumann ends.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("instanton", parents=[common], help="transition-state profile")
    p.add_argument("--L", type=float, help="interval length")
    p.add_argument("--m", type=float, help="elliptic parameter instead of --L")
    p.add_argument("--points", type=int, default=512, help="grid points (default 512)")

    sub.add_parser("barrier", parents=[common, ranged], help="activation barrier against L")
    sub.add_parser("prefactor", parents=[common, ranged, pooled], help="rate prefactor against L")
    sub.add_parser("sweep", parents=[common, ranged, pooled],
                   help="barrier, prefactor and unstable eigenvalue against L")

    p = sub.add_parser("simulate", parents=[common, pooled], help="Langevin first-passage ensemble")
    p.add_argument("--epsilon", type=float, required=True, help="noise temperature")
    p.add_argument("--L", type=float, default=2.0, help="interval length (default 2)")
    p.add_argument("--n-sites", type=int, default=32, help="lattice sites (default 32)")
    p.add_argument("--dt", type=float, default=None, help="time step (default 0.4 dz^2)")
    p.add_argument("--max-time", type=float, default=1e4, help="censoring time (default 1e4)")
    p.add_argument("--seed", type=int, default=0, help="ensemble seed (default 0)")
    p.add_argument("--runs", type=int, default=100, help="number of runs (default 100)")

    p = sub.add_parser("fit", parents=[common], help="critical exponent of the prefactor")
    p.add_argument("--side", choices=("below", "above"), default="above")
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"),
                   help="range of |L - L_c| (default 1e-4 1e-2)")
    p.add_argument("--points", type=int, default=12, help="fit points (default 12)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Turn parsed arguments into a validated :class:`RunConfig`."""
    try:
        params = ModelParams(args.mu1, args.mu2)
        fmt = args.format or ("json" if args.command == "fit" else "csv")
        out = Path(args.output or f"{args.command}.{fmt}")
        base = os.environ.get(OUTPUT_DIR_ENV)
        if base and not out.is_absolute():
            out = Path(base) / out
        extra = {}
        if args.command in ("barrier", "prefactor", "sweep"):
            extra["ranges"] = LengthRange(args.l_min, args.l_max, args.n)
        if args.command in ("prefactor", "sweep", "simulate"):
            extra["jobs"] = args.jobs
        if args.command == "instanton":
            extra.update(length=args.L, m=args.m, points=args.points)
        if args.command == "simulate":
            extra["lattice"] = LatticeConfig(args.n_sites, args.L, args.epsilon, args.dt,
                                             args.seed, args.max_time)
            extra["runs"] = args.runs
        if args.command == "fit":
            extra.update(side=args.side, points=args.points,
                         window=tuple(args.window) if args.window else None)
        return RunConfig(args.command, params, out, fmt, **extra)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
