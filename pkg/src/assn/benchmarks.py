"""Line-source and lattice benchmarks, error metrics and the parameter study."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import explicit, implicit
from .kernels import build_as_matrix
from .mesh import (
    Grid2D,
    interior,
    lattice_layout,
    linesource_initial,
    linesource_materials,
    new_flux,
    scalar_flux,
)
from .montecarlo import census_flux, default_threads
from .quadrature import QuadratureSet, build_icosahedron_quadrature

__all__ = [
    "ReferenceSolution",
    "GridMismatchError",
    "RunResult",
    "SweepResult",
    "simulate",
    "mc_reference",
    "packaged_reference",
    "error_metrics",
    "parameter_sweep",
    "lineouts",
    "rings",
    "log_clipped_distance",
    "DEFAULT_SIGMA_AS",
    "DEFAULT_BETA",
]

log = logging.getLogger(__name__)

DEFAULT_SIGMA_AS = tuple(float(s) for s in range(11))
DEFAULT_BETA = tuple(0.5 * k for k in range(1, 17))
PACKAGED_REFERENCE = "linesource_mc_50x50.csv"


class GridMismatchError(ValueError):
    pass


@dataclass
class ReferenceSolution:
    grid: Grid2D
    phi: np.ndarray
    t_end: float
    provenance: str
    seed: int | None = None

    def __post_init__(self):
        if self.phi.shape != self.grid.shape:
            raise GridMismatchError("reference field does not match its grid")
        if np.any(self.phi < 0):
            raise ValueError("reference scalar flux must be nonnegative")

    def metadata_line(self) -> str:
        g = self.grid
        return (
            f"nx={g.nx} ny={g.ny} xmin={float(g.xmin)!r} xmax={float(g.xmax)!r} ymin={float(g.ymin)!r} "
            f"ymax={float(g.ymax)!r} t_end={float(self.t_end)!r} provenance={self.provenance} seed={self.seed}"
        )

    def write(self, path, config_hash: str | None = None) -> None:
        X, Y = self.grid.mesh()
        with open(path, "w") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            fh.write(f"# {self.metadata_line()}\n")
            fh.write("x,y,phi\n")
            for x, y, v in zip(X.ravel(), Y.ravel(), self.phi.ravel()):
                fh.write(f"{float(x)!r},{float(y)!r},{float(v)!r}\n")

    @classmethod
    def read(cls, path) -> "ReferenceSolution":
        meta = {}
        rows = []
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        k, v = token.split("=", 1)
                        meta[k] = v
            elif line and not line.startswith("x,"):
                rows.append([float(v) for v in line.split(",")])
        try:
            grid = Grid2D(
                int(meta["nx"]), int(meta["ny"]),
                float(meta["xmin"]), float(meta["xmax"]),
                float(meta["ymin"]), float(meta["ymax"]),
            )
        except KeyError as exc:
            raise ValueError(f"{path}: missing metadata key {exc}") from None
        data = np.array(rows)
        if len(data) != grid.nx * grid.ny:
            raise GridMismatchError(f"{path}: {len(data)} rows for a {grid.nx}x{grid.ny} grid")
        seed = meta.get("seed")
        return cls(
            grid=grid,
            phi=data[:, 2].reshape(grid.shape),
            t_end=float(meta.get("t_end", "nan")),
            provenance=meta.get("provenance", "unknown"),
            seed=None if seed in (None, "None") else int(seed),
        )


def mc_reference(
    n_particles: int, grid: Grid2D, t_end: float = 1.0, seed: int = 0, threads: int | None = None
) -> ReferenceSolution:
    """Monte Carlo line-source reference (unit source, sigma_s = sigma_t = 1)."""
    phi, lost = census_flux(n_particles, grid, t_end, seed, threads=threads)
    if lost:
        log.warning("%d particles left the tally grid", lost)
    return ReferenceSolution(grid, phi, t_end, provenance=f"mc-census-{n_particles}", seed=seed)


def packaged_reference() -> ReferenceSolution:
    """The versioned 50x50, t = 1 Monte Carlo reference shipped with the package."""
    with resources.as_file(resources.files("assn") / "data" / PACKAGED_REFERENCE) as p:
        return ReferenceSolution.read(p)


def _same_grid(a: Grid2D, b: Grid2D) -> bool:
    return a.shape == b.shape and np.allclose(
        [a.xmin, a.xmax, a.ymin, a.ymax], [b.xmin, b.xmax, b.ymin, b.ymax], rtol=0, atol=1e-12
    )


def error_metrics(phi: np.ndarray, ref: ReferenceSolution, grid: Grid2D | None = None):
    """``(delta1, delta2)``: area-weighted L2 norms of the flux and gradient errors.

    Gradients are central differences inside and one-sided on the boundary.
    """
    if phi.shape != ref.grid.shape or (grid is not None and not _same_grid(grid, ref.grid)):
        raise GridMismatchError(f"field {phi.shape} does not match reference grid {ref.grid.shape}")
    g = ref.grid
    diff = phi - ref.phi
    delta1 = math.sqrt(float(np.sum(diff**2)) * g.cell_area)
    gx, gy = np.gradient(diff, g.dx, g.dy, edge_order=1)
    delta2 = math.sqrt(float(np.sum(gx**2 + gy**2)) * g.cell_area)
    return delta1, delta2


@dataclass
class RunResult:
    phi: np.ndarray
    grid: Grid2D
    quad: QuadratureSet
    steps: int = 0
    gmres_iterations: list = field(default_factory=list)
    inner_iterations: int = 0
    max_inner_iterations: int = 0
    wall_time: float = 0.0

    @property
    def min_phi(self) -> float:
        return float(self.phi.min())

    @property
    def max_phi(self) -> float:
        return float(self.phi.max())


def simulate(
    problem: str = "linesource",
    solver: str = "explicit",
    order: int = 4,
    n: int = 50,
    sigma_as: float = 0.0,
    beta: float = 4.5,
    cfl: float | None = None,
    t_end: float | None = None,
    eps_tol: float = 1e-4,
    gmres_tol: float = 1.5e-8,
    single_inner: bool = False,
    point_initial: bool = False,
    quad: QuadratureSet | None = None,
    ny: int | None = None,
) -> RunResult:
    """Run one benchmark configuration and return the final scalar flux.

    ``n`` cells in x (and in y unless ``ny`` is given).  ``sigma_as = 0``
    runs plain SN.  The line source starts from the cell averages of the
    Gaussian pulse unless ``point_initial`` is set.
    """
    start = time.perf_counter()
    quad = quad or build_icosahedron_quadrature(order)
    if cfl is None:
        cfl = 0.95 if solver == "explicit" else 2.0
    if problem == "linesource":
        grid = Grid2D.linesource(n, ny)
        mats = linesource_materials(grid, sigma_as)
        psi0 = linesource_initial(grid, quad, average=not point_initial)
        t_end = 1.0 if t_end is None else t_end
    elif problem == "lattice":
        grid = Grid2D.lattice(n, ny)
        mats = lattice_layout(grid, sigma_as)
        psi0 = new_flux(grid, quad.nq)
        t_end = 3.2 if t_end is None else t_end
    else:
        raise ValueError(f"unknown problem {problem!r}")
    s_as = build_as_matrix(quad, beta / quad.nq) if sigma_as > 0 else None

    if solver == "explicit":
        state = explicit.integrate(psi0, mats, grid, quad, t_end, cfl, s_as=s_as)
        result = RunResult(scalar_flux(state.psi, quad), grid, quad, steps=state.step)
    elif solver == "implicit":
        cfg = implicit.SourceIterationConfig(eps_tol=eps_tol, single_inner=single_inner)
        solv = implicit.ImplicitSolver(
            grid, quad, mats, implicit.implicit_dt(grid, cfl), s_as=s_as, si_cfg=cfg, gmres_tol=gmres_tol
        )
        steps = []
        psi = implicit.implicit_time_loop(psi0, solv, t_end, callback=lambda k, t, p: steps.append(k))
        result = RunResult(
            scalar_flux(psi, quad),
            grid,
            quad,
            steps=len(steps),
            gmres_iterations=list(solv.gmres_iterations),
            inner_iterations=solv.si_stats.iterations,
            max_inner_iterations=solv.si_stats.max_iterations,
        )
    else:
        raise ValueError(f"unknown solver {solver!r}")
    result.wall_time = time.perf_counter() - start
    return result


@dataclass
class SweepResult:
    sigma_as: np.ndarray
    beta: np.ndarray
    delta1: np.ndarray  # shape (len(sigma_as), len(beta))

    @property
    def baseline(self) -> np.ndarray:
        """Error without artificial scattering for each beta (identical by construction)."""
        zero = np.flatnonzero(self.sigma_as == 0.0)
        if zero.size == 0:
            raise ValueError("sweep has no sigma_as = 0 column")
        return self.delta1[zero[0]]

    @property
    def ratio(self) -> np.ndarray:
        return self.delta1 / self.baseline[None, :]

    def at(self, sigma_as: float, beta: float) -> float:
        i = int(np.flatnonzero(np.isclose(self.sigma_as, sigma_as))[0])
        j = int(np.flatnonzero(np.isclose(self.beta, beta))[0])
        return float(self.ratio[i, j])

    def best(self) -> tuple[float, float, float]:
        r = np.where(np.isnan(self.ratio), np.inf, self.ratio)
        i, j = np.unravel_index(np.argmin(r), r.shape)
        return float(self.sigma_as[i]), float(self.beta[j]), float(r[i, j])

    def write_csv(self, path, config_hash: str | None = None) -> None:
        with open(path, "w") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            fh.write("sigma_as,beta,delta1,ratio\n")
            ratio = self.ratio
            for i, s in enumerate(self.sigma_as):
                for j, b in enumerate(self.beta):
                    fh.write(f"{float(s)!r},{float(b)!r},{float(self.delta1[i, j])!r},{float(ratio[i, j])!r}\n")


def parameter_sweep(
    solver: str = "explicit",
    sigma_as_values=DEFAULT_SIGMA_AS,
    beta_values=DEFAULT_BETA,
    reference: ReferenceSolution | None = None,
    order: int = 2,
    n: int = 50,
    threads: int | None = None,
    **kwargs,
) -> SweepResult:
    """Normalized line-source errors over a (sigma_as, beta) lattice.

    The baseline ``sigma_as = 0`` does not depend on beta, so it is run once.
    Failed runs leave NaN in their cell.
    """
    reference = reference or packaged_reference()
    quad = build_icosahedron_quadrature(order)
    sig = np.asarray(sigma_as_values, dtype=float)
    bet = np.asarray(beta_values, dtype=float)

    def one(pair):
        s, b = pair
        try:
            res = simulate("linesource", solver, order, n, s, b, quad=quad, **kwargs)
            return error_metrics(res.phi, reference, res.grid)[0]
        except Exception as exc:  # a failed configuration is recorded, not fatal
            log.warning("sweep run sigma_as=%g beta=%g failed: %s", s, b, exc)
            return float("nan")

    baseline = one((0.0, float(bet[0])))
    pairs = [(s, b) for s in sig for b in bet if s != 0.0]
    threads = threads or default_threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            values = list(pool.map(one, pairs))
    else:
        values = [one(p) for p in pairs]
    delta1 = np.full((len(sig), len(bet)), baseline)
    it = iter(values)
    for i, s in enumerate(sig):
        if s != 0.0:
            for j in range(len(bet)):
                delta1[i, j] = next(it)
    return SweepResult(sig, bet, delta1)


def lineouts(phi: np.ndarray, grid: Grid2D) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Cuts through the domain center: horizontal, vertical and the two diagonals.

    Each entry maps a name to (coordinate along the cut, values).  Horizontal
    and vertical cuts average the two central rows/columns on even grids.
    """
    x, y = grid.centers()

    def middle(a, axis):
        k = a.shape[axis]
        idx = [k // 2] if k % 2 else [k // 2 - 1, k // 2]
        return np.take(a, idx, axis=axis).mean(axis=axis)

    out = {"horizontal": (x, middle(phi, 1)), "vertical": (y, middle(phi, 0))}
    if grid.nx == grid.ny:
        s = np.sqrt(2.0) * (x - 0.5 * (grid.xmin + grid.xmax))
        out["diagonal"] = (s, np.diagonal(phi).copy())
        out["antidiagonal"] = (s, np.diagonal(phi[::-1]).copy())
    return out


def rings(phi: np.ndarray, grid: Grid2D, radii, samples: int = 360, center=None):
    """Bilinear samples of ``phi`` on circles; returns {r: (angles, values)}."""
    x, y = grid.centers()
    cx, cy = center if center is not None else (
        0.5 * (grid.xmin + grid.xmax),
        0.5 * (grid.ymin + grid.ymax),
    )
    interp = RegularGridInterpolator((x, y), phi, method="linear")
    theta = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    out = {}
    for r in radii:
        pts = np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])
        out[float(r)] = (theta, interp(pts))
    return out


def write_lineouts_csv(path, cuts: dict, config_hash: str | None = None) -> None:
    with open(path, "w") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write("cut,s,phi\n")
        for name, (s, v) in cuts.items():
            for a, b in zip(s, v):
                fh.write(f"{name},{float(a)!r},{float(b)!r}\n")


def write_rings_csv(path, ring_data: dict, config_hash: str | None = None) -> None:
    """Ring samples plus a per-radius summary (mean, std) in comment-free columns."""
    with open(path, "w") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write("radius,angle,phi,ring_mean,ring_std\n")
        for r, (theta, v) in ring_data.items():
            mean, std = float(v.mean()), float(v.std())
            for a, b in zip(theta, v):
                fh.write(f"{float(r)!r},{float(a)!r},{float(b)!r},{mean!r},{std!r}\n")


def log_clipped_distance(a: np.ndarray, b: np.ndarray, grid: Grid2D, floor: float = 1e-7) -> float:
    """Area-weighted L2 distance of ``log10(max(phi, floor))``."""
    la = np.log10(np.maximum(a, floor))
    lb = np.log10(np.maximum(b, floor))
    return math.sqrt(float(np.sum((la - lb) ** 2)) * grid.cell_area)
