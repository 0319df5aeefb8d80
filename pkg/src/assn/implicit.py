"""Implicit-Euler as-SN solver: transport sweeps, source iteration, GMRES.

Per time step the moments of the physical scattering source are found from

    phi - M (L - sigma_as S_as+)^{-1} (sigma_s O Sigma phi) = M (L - sigma_as S_as+)^{-1} q~

with matrix-free GMRES.  ``(L - sigma_as S_as+)^{-1}`` is a source iteration
whose inner solves are upwind sweeps of the second-order streaming stencil.

Scaling convention: the discrete streaming operator is

    L_D psi = lam_x (g_{i+1/2} - g_{i-1/2}) + lam_y (h_{j+1/2} - h_{j-1/2}) + dt sig psi

with ``lam = mu dt / h`` and ``sig = sigma_a + sigma_s + sigma_as + 1/dt``, i.e. ``dt`` times
the continuous ``L``.  :func:`sweep` inverts ``L_D`` as is; the source
iteration and everything above it take unscaled sources.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .explicit import SolverError
from .kernels import MomentMaps, ScatteringMatrix, build_moment_maps
from .mesh import N_GHOST, Grid2D, MaterialField, interior, new_flux
from .quadrature import FOUR_PI, QuadratureSet

__all__ = [
    "ConvergenceError",
    "StreamingOperator",
    "SourceIterationConfig",
    "ImplicitSolver",
    "implicit_dt",
    "apply_streaming",
    "sweep",
    "source_iteration",
    "gmres_solve",
    "lhs_apply",
    "implicit_time_loop",
]

log = logging.getLogger(__name__)

FLUX_A = 1.5
FLUX_B = -0.5


class ConvergenceError(SolverError):
    """An iterative solve ran out of iterations; ``residual`` is the last one."""

    def __init__(self, message: str, residual: float, step: int | None = None):
        super().__init__(f"{message}, last residual {residual:.3e}", step)
        self.residual = residual


def implicit_dt(grid: Grid2D, cfl: float) -> float:
    """``cfl`` is the ratio of time step to cell size."""
    return cfl * min(grid.dx, grid.dy)


@dataclass
class StreamingOperator:
    grid: Grid2D
    quad: QuadratureSet
    mats: MaterialField
    dt: float
    sigma_t: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        self.sigma_t = self.mats.sigma_a + self.mats.sigma_s + self.mats.sigma_as + 1.0 / self.dt

    @property
    def lam_x(self) -> np.ndarray:
        return self.quad.mu_x * self.dt / self.grid.dx

    @property
    def lam_y(self) -> np.ndarray:
        return self.quad.mu_y * self.dt / self.grid.dy


@dataclass
class SourceIterationConfig:
    eps_tol: float = 1e-4
    max_iters: int = 500
    lipschitz_clamp: tuple[float, float] = (0.01, 0.99)
    single_inner: bool = False


def _upwind_difference(psi: np.ndarray, lam: np.ndarray, axis: int) -> np.ndarray:
    """``lam (g_{c+1/2} - g_{c-1/2})`` on interior cells, second-order upwind."""
    g = N_GHOST
    n = psi.shape[axis]
    other = 2 if axis == 1 else 1
    no = psi.shape[other]

    def shift(k):
        idx = [slice(None)] * 3
        idx[axis] = slice(g + k, n - g + k)
        idx[other] = slice(g, no - g)
        return psi[tuple(idx)]

    c, m1, m2, p1, p2 = shift(0), shift(-1), shift(-2), shift(1), shift(2)
    a, b = FLUX_A, FLUX_B
    pos = (a * c + b * m1) - (a * m1 + b * m2)
    neg = (a * p1 + b * p2) - (a * c + b * p1)
    lam = lam[:, None, None]
    return np.where(lam > 0.0, lam * pos, lam * neg)


def apply_streaming(psi: np.ndarray, op: StreamingOperator) -> np.ndarray:
    """``L_D psi`` on interior cells (ghost values of ``psi`` are used as given)."""
    out = _upwind_difference(psi, op.lam_x, 1) + _upwind_difference(psi, op.lam_y, 2)
    return out + op.dt * op.sigma_t * interior(psi)


@njit(cache=True, nogil=True)
def _sweep_kernel(rhs, lam_x, lam_y, diag, out):
    nq, nx, ny = rhs.shape
    g = 2
    for q in range(nq):
        lx = lam_x[q]
        ly = lam_y[q]
        sx = 1 if lx >= 0.0 else -1
        sy = 1 if ly >= 0.0 else -1
        ax = abs(lx)
        ay = abs(ly)
        for ii in range(nx):
            i = ii if sx > 0 else nx - 1 - ii
            ci = i + g
            for jj in range(ny):
                j = jj if sy > 0 else ny - 1 - jj
                cj = j + g
                # upstream values are the two cells behind in each direction
                ux1 = out[q, ci - sx, cj]
                ux2 = out[q, ci - 2 * sx, cj]
                uy1 = out[q, ci, cj - sy]
                uy2 = out[q, ci, cj - 2 * sy]
                num = rhs[q, i, j] + ax * (2.0 * ux1 - 0.5 * ux2) + ay * (2.0 * uy1 - 0.5 * uy2)
                out[q, ci, cj] = num / (1.5 * ax + 1.5 * ay + diag[i, j])
    return out


def sweep(rhs: np.ndarray, op: StreamingOperator) -> np.ndarray:
    """Solve ``L_D psi = rhs`` ordinate by ordinate in upwind order.

    ``rhs`` has interior shape (nq, nx, ny); the result carries zero ghosts.
    """
    diag = op.dt * op.sigma_t
    if np.any(diag <= 0.0):
        raise SolverError("streaming operator has a non-positive diagonal")
    out = new_flux(op.grid, op.quad.nq)
    return _sweep_kernel(
        np.ascontiguousarray(rhs, dtype=float), op.lam_x, op.lam_y, np.ascontiguousarray(diag), out
    )


@dataclass
class SourceIterationStats:
    calls: int = 0
    iterations: int = 0
    max_iterations: int = 0
    last_ratio: float = float("nan")

    def record(self, iters: int, ratio: float) -> None:
        self.calls += 1
        self.iterations += iters
        self.max_iterations = max(self.max_iterations, iters)
        self.last_ratio = ratio


def source_iteration(
    psi0: np.ndarray,
    R: np.ndarray,
    op: StreamingOperator,
    s_as: ScatteringMatrix | None,
    cfg: SourceIterationConfig | None = None,
    stats: SourceIterationStats | None = None,
) -> np.ndarray:
    """Solve ``(L - sigma_as S_as+) psi = R`` by iterating ``L psi' = sigma_as S_as+ psi + R``.

    Stops once ``||psi' - psi||_2 < eps_tol * (1 - T) / T`` where ``T`` is the
    ratio of successive update norms (clamped), taken as 0.5 before two
    updates are available.

    Parameters
    ----------
    psi0 : ndarray
        Initial guess with ghost layers.
    R : ndarray
        Unscaled source on interior cells.
    """
    cfg = cfg or SourceIterationConfig()
    sig_as = op.mats.sigma_as
    if s_as is None or not np.any(sig_as > 0.0):
        if stats is not None:
            stats.record(1, 0.0)
        return sweep(op.dt * R, op)

    def update(psi):
        return sweep(op.dt * (sig_as * s_as.apply(interior(psi)) + R), op)

    lo, hi = cfg.lipschitz_clamp
    prev = psi0
    cur = update(prev)
    if cfg.single_inner:
        if stats is not None:
            stats.record(1, float("nan"))
        return cur
    diff = np.linalg.norm(cur - prev)
    last_diff = None
    T = 0.5
    for it in range(1, cfg.max_iters + 1):
        if last_diff is not None and last_diff > 0.0:
            T = min(max(diff / last_diff, lo), hi)
        if diff < cfg.eps_tol * (1.0 - T) / T:
            if stats is not None:
                stats.record(it, T)
            return cur
        prev, cur = cur, update(cur)
        last_diff, diff = diff, np.linalg.norm(cur - prev)
    raise ConvergenceError("source iteration did not converge", float(diff))


def gmres_solve(apply, b: np.ndarray, tol: float = 1.5e-8, x0=None, max_krylov: int = 200):
    """Full GMRES with modified Gram-Schmidt.

    Parameters
    ----------
    apply : callable
        Linear operator acting on arrays shaped like ``b``.
    b : ndarray
    tol : float
        Target relative residual ``||b - A x|| / ||b||``.
    x0 : ndarray, optional
    max_krylov : int
        Largest Krylov dimension before giving up.

    Returns
    -------
    x : ndarray
    iterations : int
        Number of operator applications spent on Krylov vectors.
    """
    shape = b.shape
    bvec = b.ravel()
    bnorm = np.linalg.norm(bvec)
    x = np.zeros_like(bvec) if x0 is None else np.array(x0, dtype=float).ravel()
    if bnorm == 0.0:
        return np.zeros(shape), 0
    r = bvec - apply(x.reshape(shape)).ravel() if np.any(x) else bvec.copy()
    beta = np.linalg.norm(r)
    if beta <= tol * bnorm:
        return x.reshape(shape), 0
    V = np.zeros((max_krylov + 1, bvec.size))
    H = np.zeros((max_krylov + 1, max_krylov))
    cs = np.zeros(max_krylov)
    sn = np.zeros(max_krylov)
    e = np.zeros(max_krylov + 1)
    e[0] = beta
    V[0] = r / beta
    k = 0
    res = beta
    for k in range(max_krylov):
        w = apply(V[k].reshape(shape)).ravel()
        for i in range(k + 1):
            H[i, k] = np.dot(w, V[i])
            w = w - H[i, k] * V[i]
        hnext = np.linalg.norm(w)
        H[k + 1, k] = hnext
        if hnext > 0.0:
            V[k + 1] = w / hnext
        for i in range(k):
            hi = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = hi
        denom = np.hypot(H[k, k], H[k + 1, k])
        cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
        H[k, k] = denom
        H[k + 1, k] = 0.0
        e[k + 1] = -sn[k] * e[k]
        e[k] = cs[k] * e[k]
        res = abs(e[k + 1])
        if res <= tol * bnorm or hnext == 0.0:
            break
    else:
        raise ConvergenceError("GMRES exceeded the Krylov dimension", res / bnorm)
    m = k + 1
    y = np.linalg.solve(np.triu(H[:m, :m]), e[:m])
    x = x + V[:m].T @ y
    return x.reshape(shape), m


@dataclass
class ImplicitSolver:
    """Bundles the operators needed by one implicit as-SN run."""

    grid: Grid2D
    quad: QuadratureSet
    mats: MaterialField
    dt: float
    s_as: ScatteringMatrix | None = None
    si_cfg: SourceIterationConfig = field(default_factory=SourceIterationConfig)
    gmres_tol: float = 1.5e-8
    moments: MomentMaps | None = None

    def __post_init__(self):
        self.op = StreamingOperator(self.grid, self.quad, self.mats, self.dt)
        if self.moments is None:
            self.moments = build_moment_maps(self.quad, 1)
        self.si_stats = SourceIterationStats()
        self.gmres_iterations: list[int] = []

    @property
    def source(self) -> np.ndarray:
        """Isotropic per-ordinate source ``Q / 4 pi``."""
        return np.broadcast_to(self.mats.source_q / FOUR_PI, (self.quad.nq, *self.grid.shape))

    def solve_inner(self, psi0, R):
        return source_iteration(psi0, R, self.op, self.s_as, self.si_cfg, self.si_stats)

    def scattering_source(self, phi):
        return self.mats.sigma_s * self.moments.scatter(phi)

    def lhs(self, psi0, phi):
        return lhs_apply(psi0, phi, self)

    def step(self, psi_old: np.ndarray, phi_old: np.ndarray):
        """Advance one implicit Euler step; returns ``(psi_new, phi_new)``."""
        M = self.moments
        base = self.source + interior(psi_old) / self.dt
        b = M.to_moments(interior(self.solve_inner(psi_old, base)))
        phi, iters = gmres_solve(lambda p: self.lhs(psi_old, p), b, self.gmres_tol, x0=phi_old)
        self.gmres_iterations.append(iters)
        psi = self.solve_inner(psi_old, self.scattering_source(phi) + base)
        return psi, phi


def lhs_apply(psi0: np.ndarray, phi: np.ndarray, solver: ImplicitSolver) -> np.ndarray:
    """``phi - M (L - sigma_as S_as+)^{-1} (sigma_s O Sigma phi)``."""
    psi = solver.solve_inner(psi0, solver.scattering_source(phi))
    return phi - solver.moments.to_moments(interior(psi))


def implicit_time_loop(
    psi0: np.ndarray, solver: ImplicitSolver, t_end: float, callback=None
) -> np.ndarray:
    """Sweeping-Krylov time loop from t = 0 to ``t_end``.

    The last step is shortened to land on ``t_end``; this rebuilds the
    streaming operator for the shorter step.
    """
    psi = psi0.copy()
    phi = solver.moments.to_moments(interior(psi))
    t = 0.0
    step = 0
    dt = solver.dt
    while t < t_end * (1.0 - 1e-14):
        h = min(dt, t_end - t)
        if h != solver.dt:
            solver.dt = h
            solver.op = StreamingOperator(solver.grid, solver.quad, solver.mats, h)
        try:
            psi, phi = solver.step(psi, phi)
        except SolverError as exc:
            raise SolverError(str(exc), step + 1) from exc
        step += 1
        t += h
        if not np.all(np.isfinite(interior(psi))):
            raise SolverError("non-finite angular flux", step)
        if callback is not None:
            callback(step, t, psi)
    log.debug("implicit run finished after %d steps, GMRES its %s", step, solver.gmres_iterations)
    return psi
