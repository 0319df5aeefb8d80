"""Command-line entry point: configuration, run orchestration and outputs.

Configuration files hold one ``key = value`` per line with ``#`` comments.
Every key has a kebab-case flag (``sigma_as`` -> ``--sigma-as``); flags
override the file.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .benchmarks import (
    DEFAULT_BETA,
    DEFAULT_SIGMA_AS,
    ReferenceSolution,
    error_metrics,
    lineouts,
    mc_reference,
    packaged_reference,
    parameter_sweep,
    rings,
    simulate,
    write_lineouts_csv,
    write_rings_csv,
)
from .explicit import SolverError
from .mesh import Grid2D, write_flux_csv
from .quadrature import build_icosahedron_quadrature, export_quadrature
from .stability import build_entropy_matrix, verify_positive_definite, write_spectrum_csv

__all__ = ["ConfigError", "SolverConfig", "parse_config", "read_config_file", "run", "main"]

log = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_SOLVER = 3

PROBLEMS = ("linesource", "lattice")
SOLVERS = ("explicit", "implicit")
REQUIRED = ("problem", "solver")
# keys that only choose where files go; they do not enter the config hash
OUTPUT_KEYS = ("output_dir", "prefix")


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _opt_str(text: str):
    return text.strip() or None


CONVERTERS = {
    "problem": str,
    "solver": str,
    "quad_order": int,
    "nx": int,
    "ny": int,
    "cfl": float,
    "t_end": float,
    "sigma_as": float,
    "beta": float,
    "eps_tol": float,
    "gmres_tol": float,
    "seed": int,
    "output_dir": str,
    "prefix": _opt_str,
    "reference": _opt_str,
    "single_inner_iteration": _bool,
    "ring_radii": _floats,
}


@dataclass(frozen=True)
class SolverConfig:
    problem: str
    solver: str
    quad_order: int
    nx: int
    ny: int
    cfl: float
    t_end: float
    sigma_as: float
    beta: float
    eps_tol: float = 1e-4
    gmres_tol: float = 1.5e-8
    seed: int = 0
    output_dir: str = "."
    prefix: str | None = None
    reference: str | None = None
    single_inner_iteration: bool = False
    ring_radii: tuple = ()

    def config_hash(self) -> str:
        """Short SHA-256 of the physics and numerics settings."""
        items = {k: v for k, v in asdict(self).items() if k not in OUTPUT_KEYS}
        text = ";".join(f"{k}={items[k]!r}" for k in sorted(items))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def stem(self) -> str:
        return self.prefix or f"{self.problem}_{self.solver}"


def defaults_for(problem: str, solver: str) -> dict:
    """Headline settings for a problem/solver pair."""
    d = {"quad_order": 4, "eps_tol": 1e-4, "gmres_tol": 1.5e-8, "seed": 0}
    if solver == "explicit":
        d.update(cfl=0.95, sigma_as=5.0, beta=4.5)
    else:
        d.update(cfl=2.0, sigma_as=7.0, beta=4.0)
    if problem == "linesource":
        d.update(nx=200, ny=200, t_end=1.0, ring_radii=(0.2, 0.4, 0.6, 0.8))
    else:
        d.update(nx=280, ny=280, t_end=3.2, ring_radii=(0.5, 1.0, 1.5, 2.0, 2.5, 3.0))
    return d


def read_config_file(path) -> dict[str, str]:
    """Raw ``key -> value`` strings; later duplicates win."""
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in text.split("=", 1))
        raw[key] = value
    return raw


def parse_config(path=None, overrides: dict | None = None) -> SolverConfig:
    """Merge a config file and flag overrides into a validated ``SolverConfig``.

    ``overrides`` maps snake_case keys to strings (or already typed values).
    """
    raw = read_config_file(path) if path is not None else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(CONVERTERS))
    if unknown:
        raise ConfigError(f"unknown configuration key: {unknown[0]}")
    values = {}
    for key, value in raw.items():
        if isinstance(value, str):
            try:
                value = CONVERTERS[key](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        values[key] = value
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key: {missing[0]}")
    if values["problem"] not in PROBLEMS:
        raise ConfigError(f"problem must be one of {PROBLEMS}, got {values['problem']!r}")
    if values["solver"] not in SOLVERS:
        raise ConfigError(f"solver must be one of {SOLVERS}, got {values['solver']!r}")
    merged = defaults_for(values["problem"], values["solver"])
    merged.update(values)
    if "nx" in values and "ny" not in values:
        merged["ny"] = values["nx"]
    merged["ring_radii"] = tuple(merged["ring_radii"])
    cfg = SolverConfig(**merged)
    _validate(cfg)
    return cfg


def _validate(cfg: SolverConfig) -> None:
    positive = ("cfl", "t_end", "beta", "eps_tol", "gmres_tol")
    for key in positive:
        v = getattr(cfg, key)
        if not (math.isfinite(v) and v > 0):
            raise ConfigError(f"{key} must be positive, got {v!r}")
    if not (math.isfinite(cfg.sigma_as) and cfg.sigma_as >= 0):
        raise ConfigError(f"sigma_as must be nonnegative, got {cfg.sigma_as!r}")
    if cfg.quad_order < 2:
        raise ConfigError(f"quad_order must be >= 2, got {cfg.quad_order}")
    if cfg.nx < 1 or cfg.ny < 1:
        raise ConfigError(f"grid must have at least one cell, got {cfg.nx}x{cfg.ny}")


def _load_reference(ref: str) -> ReferenceSolution:
    return packaged_reference() if ref == "packaged" else ReferenceSolution.read(ref)


def _config_header(cfg: SolverConfig) -> str:
    body = " ".join(f"{k}={v}" for k, v in asdict(cfg).items() if k not in OUTPUT_KEYS)
    return f"config_hash={cfg.config_hash()}\n{body}"


def run(cfg: SolverConfig, out=None) -> int:
    """Run one configuration, write its outputs and return an exit status."""
    out = out or sys.stdout
    reference = _load_reference(cfg.reference) if cfg.reference else None
    try:
        result = simulate(
            cfg.problem,
            cfg.solver,
            cfg.quad_order,
            cfg.nx,
            cfg.sigma_as,
            cfg.beta,
            cfl=cfg.cfl,
            t_end=cfg.t_end,
            eps_tol=cfg.eps_tol,
            gmres_tol=cfg.gmres_tol,
            single_inner=cfg.single_inner_iteration,
            ny=cfg.ny,
        )
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    stem = cfg.stem
    write_flux_csv(outdir / f"{stem}_phi.csv", result.grid, result.phi, header=_config_header(cfg))
    write_lineouts_csv(outdir / f"{stem}_lineouts.csv", lineouts(result.phi, result.grid), h)
    radii = [r for r in cfg.ring_radii if _ring_fits(result.grid, r)]
    write_rings_csv(outdir / f"{stem}_rings.csv", rings(result.phi, result.grid, radii), h)

    summary = {
        "config_hash": h,
        "config": asdict(cfg),
        "min_phi": result.min_phi,
        "max_phi": result.max_phi,
        "steps": result.steps,
        "gmres_iterations_total": int(sum(result.gmres_iterations)),
        "gmres_iterations_max": int(max(result.gmres_iterations, default=0)),
        "source_iterations_total": result.inner_iterations,
        "source_iterations_max": result.max_inner_iterations,
        "wall_time_s": result.wall_time,
    }
    if reference is not None:
        d1, d2 = error_metrics(result.phi, reference, result.grid)
        summary.update(delta1=d1, delta2=d2, reference=reference.provenance)
    (outdir / f"{stem}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for key in ("min_phi", "max_phi", "steps", "delta1", "delta2"):
        if key in summary:
            print(f"{key} = {summary[key]}", file=out)
    return 0


def _ring_fits(grid: Grid2D, r: float) -> bool:
    x, y = grid.centers()
    cx, cy = 0.5 * (grid.xmin + grid.xmax), 0.5 * (grid.ymin + grid.ymax)
    return cx - r >= x[0] and cx + r <= x[-1] and cy - r >= y[0] and cy + r <= y[-1]


def _sweep_hash(args) -> str:
    text = repr(sorted((k, v) for k, v in vars(args).items() if k not in ("out", "func")))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _cmd_run(args) -> int:
    overrides = {k: getattr(args, k) for k in CONVERTERS if getattr(args, k, None) is not None}
    try:
        cfg = parse_config(args.config, overrides)
        return run(cfg)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _cmd_sweep(args) -> int:
    reference = _load_reference(args.reference)
    result = parameter_sweep(
        args.solver,
        _floats(args.sigma_as_values),
        _floats(args.beta_values),
        reference=reference,
        order=args.quad_order,
        n=reference.grid.nx,
        cfl=args.cfl,
    )
    result.write_csv(args.out, _sweep_hash(args))
    s, b, r = result.best()
    print(f"best ratio {r:.4f} at sigma_as={s:g} beta={b:g}")
    return 0


def _cmd_quadrature(args) -> int:
    export_quadrature(build_icosahedron_quadrature(args.order), args.out)
    return 0


def _cmd_stability(args) -> int:
    report = verify_positive_definite(build_entropy_matrix(args.n))
    write_spectrum_csv(report, args.out, header=f"config_hash={_sweep_hash(args)} n={args.n}")
    print(f"smallest = {report.smallest!r}\nlargest = {report.largest!r}")
    print("positive definite" if report.positive_definite else "NOT positive definite")
    return 0 if report.positive_definite else 1


def _cmd_mc(args) -> int:
    grid = Grid2D.linesource(args.n)
    ref = mc_reference(args.particles, grid, args.t_end, args.seed)
    ref.write(args.out, config_hash=_sweep_hash(args))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="assn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one line-source or lattice simulation")
    p.add_argument("--config", help="key = value configuration file")
    for key in CONVERTERS:
        flag = "--" + key.replace("_", "-")
        if key == "single_inner_iteration":
            p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
        else:
            p.add_argument(flag, dest=key, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="line-source (sigma_as, beta) parameter study")
    p.add_argument("--solver", choices=SOLVERS, default="explicit")
    p.add_argument("--quad-order", type=int, default=2)
    p.add_argument("--sigma-as-values", default=",".join(f"{v:g}" for v in DEFAULT_SIGMA_AS))
    p.add_argument("--beta-values", default=",".join(f"{v:g}" for v in DEFAULT_BETA))
    p.add_argument("--reference", default="packaged", help="reference CSV or 'packaged'")
    p.add_argument("--cfl", type=float, default=None)
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("quadrature", help="export an icosahedron quadrature set")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_quadrature)

    p = sub.add_parser("stability-check", help="spectrum of the implicit flux entropy matrix")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--out", default="spectrum.csv")
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("mc-reference", help="Monte Carlo line-source reference")
    p.add_argument("--particles", type=int, default=4_000_000)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="linesource_mc.csv")
    p.set_defaults(func=_cmd_mc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
