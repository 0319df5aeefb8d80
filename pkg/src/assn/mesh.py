"""Regular 2-D grids, material fields, benchmark setups and flux storage.

Angular flux arrays have shape ``(nq, nx + 4, ny + 4)``: two ghost layers on
every side hold the (vacuum) boundary values.  Index ``[q, i + 2, j + 2]``
is interior cell ``(i, j)``, with ``i`` along x.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .quadrature import QuadratureSet

__all__ = [
    "Grid2D",
    "MaterialField",
    "ConfigurationError",
    "N_GHOST",
    "new_flux",
    "interior",
    "linesource_initial",
    "linesource_materials",
    "lattice_layout",
    "LATTICE_ABSORBERS",
    "LATTICE_SOURCE",
    "scalar_flux",
    "write_flux_csv",
]

N_GHOST = 2
LINESOURCE_DELTA = 0.03**2
LINESOURCE_FLOOR = 1e-4

# lower-left corners (cm) of the unit squares of the 7x7 lattice
LATTICE_ABSORBERS = (
    (1, 1), (5, 1),
    (2, 2), (4, 2),
    (1, 3), (5, 3),
    (2, 4), (4, 4),
    (1, 5), (3, 5), (5, 5),
)
LATTICE_SOURCE = (3, 3)


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    n_ghost: int = field(default=N_GHOST, init=False)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError("nx and ny must be positive")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigurationError("empty domain")

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.xmin + (np.arange(self.nx) + 0.5) * self.dx
        y = self.ymin + (np.arange(self.ny) + 0.5) * self.dy
        return x, y

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.linspace(self.xmin, self.xmax, self.nx + 1),
            np.linspace(self.ymin, self.ymax, self.ny + 1),
        )

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates as (nx, ny) arrays."""
        x, y = self.centers()
        return np.meshgrid(x, y, indexing="ij")

    @classmethod
    def linesource(cls, n: int, ny: int | None = None) -> "Grid2D":
        return cls(n, ny or n, -1.5, 1.5, -1.5, 1.5)

    @classmethod
    def lattice(cls, n: int, ny: int | None = None) -> "Grid2D":
        return cls(n, ny or n, 0.0, 7.0, 0.0, 7.0)


@dataclass
class MaterialField:
    """Per-cell cross sections (1/cm) and isotropic source density."""

    sigma_a: np.ndarray
    sigma_s: np.ndarray
    sigma_as: np.ndarray
    source_q: np.ndarray

    def __post_init__(self):
        for name in ("sigma_a", "sigma_s", "sigma_as", "source_q"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if np.any(arr < 0):
                raise ConfigurationError(f"{name} must be nonnegative")
            setattr(self, name, arr)

    @property
    def sigma_t(self) -> np.ndarray:
        return self.sigma_a + self.sigma_s

    @classmethod
    def uniform(cls, grid: Grid2D, sigma_a=0.0, sigma_s=0.0, sigma_as=0.0, source_q=0.0):
        full = lambda v: np.full(grid.shape, float(v))
        return cls(full(sigma_a), full(sigma_s), full(sigma_as), full(source_q))

    def with_sigma_as(self, sigma_as: float) -> "MaterialField":
        return MaterialField(
            self.sigma_a, self.sigma_s, np.full_like(self.sigma_a, float(sigma_as)), self.source_q
        )


def new_flux(grid: Grid2D, nq: int) -> np.ndarray:
    return np.zeros((nq, grid.nx + 2 * N_GHOST, grid.ny + 2 * N_GHOST))


def interior(psi: np.ndarray) -> np.ndarray:
    g = N_GHOST
    return psi[..., g:-g, g:-g]


def linesource_initial(grid: Grid2D, quad: QuadratureSet, average: bool = False) -> np.ndarray:
    """Isotropic narrow Gaussian pulse at the origin, floored at 1e-4.

    With ``average=False`` the Gaussian is sampled at cell centers; with
    ``average=True`` it is replaced by its exact cell average, which keeps
    the discrete particle count at one on coarse grids.
    """
    d = LINESOURCE_DELTA
    if average:
        # separable: exp(-(x^2+y^2)/(4d)) / (4 pi d) = g(x) g(y) / (4 pi)
        s = 2.0 * np.sqrt(d)
        xe, ye = grid.edges()
        gx = np.diff(special.erf(xe / s)) / (2.0 * grid.dx)
        gy = np.diff(special.erf(ye / s)) / (2.0 * grid.dy)
        gauss = np.outer(gx, gy) / (4.0 * np.pi)
    else:
        X, Y = grid.mesh()
        gauss = np.exp(-(X**2 + Y**2) / (4.0 * d)) / (4.0 * np.pi * d)
    psi = new_flux(grid, quad.nq)
    interior(psi)[...] = np.maximum(LINESOURCE_FLOOR, gauss)[None]
    return psi


def linesource_materials(grid: Grid2D, sigma_as: float = 0.0) -> MaterialField:
    return MaterialField.uniform(grid, sigma_a=0.0, sigma_s=1.0, sigma_as=sigma_as)


def lattice_layout(grid: Grid2D, sigma_as: float = 0.0) -> MaterialField:
    """Lattice materials on [0, 7]^2: scattering background, 11 absorbers, central source."""
    if grid.nx % 7 or grid.ny % 7:
        raise ConfigurationError(f"lattice grid {grid.nx}x{grid.ny} is not divisible by 7")
    if (grid.xmin, grid.xmax, grid.ymin, grid.ymax) != (0.0, 7.0, 0.0, 7.0):
        raise ConfigurationError("lattice grid must cover [0, 7]^2")
    X, Y = grid.mesh()
    sq_x, sq_y = np.floor(X).astype(int), np.floor(Y).astype(int)
    absorber = np.zeros(grid.shape, dtype=bool)
    for cx, cy in LATTICE_ABSORBERS:
        absorber |= (sq_x == cx) & (sq_y == cy)
    source = (sq_x == LATTICE_SOURCE[0]) & (sq_y == LATTICE_SOURCE[1])
    dense = absorber | source
    return MaterialField(
        sigma_a=np.where(dense, 10.0, 0.0),
        sigma_s=np.where(dense, 0.0, 1.0),
        sigma_as=np.full(grid.shape, float(sigma_as)),
        source_q=np.where(source, 1.0, 0.0),
    )


def scalar_flux(psi: np.ndarray, quad: QuadratureSet, ghosts: bool = True) -> np.ndarray:
    """``Phi = sum_q w_q psi_q`` on the interior cells."""
    if ghosts:
        psi = interior(psi)
    return np.tensordot(quad.weights, psi, axes=(0, 0))


def write_flux_csv(path, grid: Grid2D, phi: np.ndarray, header: str | None = None) -> None:
    """Write ``x,y,phi`` rows, x-major over cell centers."""
    X, Y = grid.mesh()
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        fh.write("x,y,phi\n")
        for x, y, v in zip(X.ravel(), Y.ravel(), phi.ravel()):
            fh.write(f"{float(x)!r},{float(y)!r},{float(v)!r}\n")
