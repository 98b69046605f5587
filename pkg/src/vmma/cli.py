"""Command-line driver: read a run configuration, run the study, write results.csv.

Configuration files are flat ``key = value`` lines.  ``#`` starts a comment,
lists are comma-separated.  Command-line flags override file values.

    study   = test2
    problem = test2a
    disc    = spectral
    N       = 4, 6, 8
    eps     = 0.001
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .analysis import STUDY_KINDS, run_study
from .function_space import write_solution
from .nonlinear_solver import SolverOptions
from .problem import BUILTIN_IDS, builtin_problem

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_LINEAR = 4

DISC_KINDS = ("spectral", "hermite_fem")

CSV_HEADER = ("study,problem,disc,epsilon,h,N,dofs,newton_iters,converged,err_L2,err_H1,"
              "err_H2,ratio_L2_eps,ratio_H1_sqrteps,ratio_H2_qrteps,min_hessian_eig,wall_time_s")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if isinstance(line, int) else (f"{line}: " if line else "")
        super().__init__(where + message)


@dataclass
class RunConfig:
    study: str
    problem: str
    disc: str
    eps: list
    N: list = field(default_factory=list)
    mesh: list = field(default_factory=list)
    gamma: Optional[float] = None
    newton_tol: float = 1e-10
    max_iters: int = 50
    damping: str = "halving"
    out: str = "."
    dump_solutions: bool = False

    @property
    def orders(self):
        return self.N if self.disc == "spectral" else self.mesh

    @property
    def points(self):
        return len(self.orders) if self.study == "test2" else len(self.eps)

    def solver_options(self):
        return SolverOptions(newton_tol=self.newton_tol, max_iters=self.max_iters,
                             damping=self.damping)


def _float_list(text):
    return [float(v) for v in _items(text)]


def _items(text):
    items = [v.strip() for v in text.split(",")]
    if not items or any(not v for v in items):
        raise ValueError("empty list entry")
    return items


def _int_list(text):
    out = []
    for v in _items(text):
        n = int(v)
        if n < 1:
            raise ValueError(f"resolution must be positive, got {n}")
        out.append(n)
    return out


def _mesh_list(text):
    out = []
    for v in _items(text):
        if "x" in v:
            nx, ny = (int(t) for t in v.split("x"))
        else:
            nx = ny = int(v)
        if nx < 1 or ny < 1:
            raise ValueError(f"mesh counts must be positive, got {v}")
        out.append((nx, ny))
    return out


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


_PARSERS = {
    "study": _choice(STUDY_KINDS),
    "problem": _choice(BUILTIN_IDS),
    "disc": _choice(DISC_KINDS),
    "N": _int_list,
    "mesh": _mesh_list,
    "eps": _float_list,
    "gamma": float,
    "newton_tol": float,
    "max_iters": int,
    "damping": _choice(("halving", "none")),
    "out": str,
    "dump_solutions": _bool,
}


def read_entries(text):
    """Raw ``{key: (value, line)}`` from config text; syntax errors carry the line."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        entries[key] = (value, lineno)
    return entries


def build_config(entries) -> RunConfig:
    """Validate raw entries; each value's origin (line or flag) labels its errors."""
    vals = {}
    for key, (text, where) in entries.items():
        try:
            vals[key] = _PARSERS[key](text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", where) from None

    def where(key):
        return entries[key][1] if key in entries else None

    for key in ("study", "problem", "disc", "eps"):
        if key not in vals:
            raise ConfigError(f"missing required key {key!r}")
    study, disc, eps = vals["study"], vals["disc"], vals["eps"]
    if any(e <= 0 or not math.isfinite(e) for e in eps):
        raise ConfigError("eps values must be positive", where("eps"))
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps list must be strictly decreasing", where("eps"))
    if "gamma" in vals and study != "test3":
        raise ConfigError("gamma is only valid with study = test3", where("gamma"))
    if "N" in vals and disc != "spectral":
        raise ConfigError("N applies to disc = spectral; use mesh for hermite_fem", where("N"))
    if "mesh" in vals and disc != "hermite_fem":
        raise ConfigError("mesh applies to disc = hermite_fem", where("mesh"))
    if "newton_tol" in vals and not vals["newton_tol"] > 0:
        raise ConfigError("newton_tol must be positive", where("newton_tol"))
    if "max_iters" in vals and vals["max_iters"] < 1:
        raise ConfigError("max_iters must be at least 1", where("max_iters"))
    orders = vals.get("N") or vals.get("mesh") or []
    order_key = "N" if "N" in vals else "mesh"
    if study == "test2":
        if len(eps) != 1:
            raise ConfigError("test2 runs at a single eps", where("eps"))
        if not orders:
            raise ConfigError("test2 needs a resolution list (N or mesh)")
    elif study == "test1":
        if len(orders) > 1:
            raise ConfigError("test1 uses a single resolution", where(order_key))
        if not orders and disc != "spectral":
            raise ConfigError("test1 with hermite_fem needs a mesh")
    else:
        if "gamma" not in vals:
            raise ConfigError("test3 needs gamma (1 or 0.5)")
        if vals["gamma"] not in (1.0, 0.5):
            raise ConfigError("gamma must be 1 or 0.5", where("gamma"))
        if orders:
            raise ConfigError("test3 derives its resolution from gamma", where(order_key))
    return RunConfig(**vals)


def parse_config(text) -> RunConfig:
    return build_config(read_entries(text))


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def csv_row(rec, timing=False):
    cols = [rec.study, rec.problem, rec.disc, rec.eps, rec.h, rec.N, rec.dofs,
            rec.newton_iters, rec.converged, rec.err_L2, rec.err_H1, rec.err_H2,
            rec.ratio_L2_eps, rec.ratio_H1_sqrteps, rec.ratio_H2_qrteps,
            rec.min_hessian_eig, rec.wall_time if timing else 0.0]
    return ",".join(_fmt(c) for c in cols)


def write_results(path, records, timing=False):
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(csv_row(rec, timing) + "\n")


def dump_name(rec):
    return f"{rec.problem}_{rec.disc}_{rec.eps!r}_{rec.N}.sol"


def summary_line(rec):
    return (f"{rec.study} {rec.problem} {rec.disc} eps={rec.eps:g} N={rec.N} dofs={rec.dofs} "
            f"iters={rec.newton_iters} {rec.status} L2={rec.err_L2:.3e} H1={rec.err_H1:.3e} "
            f"H2={rec.err_H2:.3e}")


def _run_points(cfg: RunConfig, orders):
    p = builtin_problem(cfg.problem)
    return run_study(cfg.study, p, cfg.disc, orders=orders or None, eps=cfg.eps,
                     gamma=cfg.gamma, opts=cfg.solver_options())


def run(cfg: RunConfig, jobs=1, progress=None):
    """Records in plan order.  Only test2 points are independent; cascades run serially."""
    if cfg.study == "test2" and jobs > 1 and len(cfg.orders) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_points, [cfg] * len(cfg.orders),
                                   [[o] for o in cfg.orders]))
        records = [rec for chunk in chunks for rec in chunk]
        if progress:
            for rec in records:
                progress(rec)
        return records
    p = builtin_problem(cfg.problem)
    return run_study(cfg.study, p, cfg.disc, orders=cfg.orders or None, eps=cfg.eps,
                     gamma=cfg.gamma, opts=cfg.solver_options(), progress=progress)


_FLAG_KEYS = ("study", "problem", "disc", "N", "mesh", "eps", "gamma", "out")


def make_parser():
    ap = argparse.ArgumentParser(
        prog="vmma",
        description="Convergence studies for -eps*Bilap(u) + det(D2u) = f on the unit square.")
    ap.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    ap.add_argument("--study", help="test1 | test2 | test3")
    ap.add_argument("--problem", help="built-in problem id, e.g. test2a")
    ap.add_argument("--disc", help="spectral | hermite_fem")
    ap.add_argument("--N", help="comma-separated spectral orders")
    ap.add_argument("--mesh", help="comma-separated mesh counts (n or nxm)")
    ap.add_argument("--eps", help="comma-separated, strictly decreasing eps values")
    ap.add_argument("--gamma", help="coupling exponent for test3: h = eps**gamma")
    ap.add_argument("--strict", action="store_true", help="exit 3 if any point fails to converge")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for independent points")
    ap.add_argument("--out", metavar="DIR", help="output directory (default: current)")
    ap.add_argument("--dump-solutions", action="store_true", help="write one .sol file per point")
    ap.add_argument("--timing", action="store_true",
                    help="record measured wall time (otherwise 0, keeping output reproducible)")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        entries = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    entries = read_entries(fh.read())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc.strerror}", args.config) from None
        for key in _FLAG_KEYS:
            value = getattr(args, key)
            if value is not None:
                entries[key] = (value, f"--{key}")
        if args.dump_solutions:
            entries["dump_solutions"] = ("true", "--dump-solutions")
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = build_config(entries)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    os.makedirs(cfg.out, exist_ok=True)
    records = run(cfg, args.jobs, progress=lambda rec: print(summary_line(rec), flush=True))
    write_results(os.path.join(cfg.out, "results.csv"), records, timing=args.timing)
    if cfg.dump_solutions:
        for rec in records:
            if rec.solution is not None:
                space, coeffs = rec.solution
                write_solution(os.path.join(cfg.out, dump_name(rec)), space, coeffs, rec.eps)

    if any(rec.status == "linear_failure" for rec in records):
        return EXIT_LINEAR
    if args.strict and any(not rec.converged for rec in records):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
