"""Explicit second-order finite-volume as-SN integrator.

Streaming uses minmod-limited linear reconstruction in x and y separately
with upwind face values; time stepping is Heun's method.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .kernels import IsotropicScattering, ScatteringMatrix, build_isotropic_matrix
from .mesh import N_GHOST, Grid2D, MaterialField, interior
from .quadrature import FOUR_PI, QuadratureSet

__all__ = ["SolverError", "ExplicitState", "stable_dt", "minmod", "rhs", "step_heun", "integrate"]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Non-finite values or a failed inner solve; ``step`` is the time step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass
class ExplicitState:
    psi: np.ndarray
    time: float
    dt: float
    cfl: float
    step: int = 0


def stable_dt(grid: Grid2D, quad: QuadratureSet, cfl: float, mats: MaterialField | None = None) -> float:
    """Heun time step for the unsplit 2-D update.

    ``dt = cfl / (max_q(|mu_x|/dx + |mu_y|/dy) + max(sigma_t + sigma_as) / 2)``: the
    odd-even mode of the upwind stencil then stays inside Heun's stability
    interval [-2, 0] even with strong absorbers.
    """
    rate = np.max(np.abs(quad.mu_x) / grid.dx + np.abs(quad.mu_y) / grid.dy)
    if mats is not None:
        rate += 0.5 * float(np.max(mats.sigma_t + mats.sigma_as))
    return cfl / rate


def minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0.0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def _streaming(psi: np.ndarray, mu: np.ndarray, h: float, axis: int) -> np.ndarray:
    """``-mu d(psi)/dx`` along ``axis`` (1 or 2) on interior cells."""
    g = N_GHOST
    n = psi.shape[axis]
    other = 2 if axis == 1 else 1
    no = psi.shape[other]

    def take(a, lo, hi):
        idx = [slice(None)] * 3
        idx[axis] = slice(lo, hi)
        idx[other] = slice(g, no - g)
        return a[tuple(idx)]

    psi = take(psi, 0, n)
    d = np.diff(psi, axis=axis)
    # slopes of cells 1 .. n-2 (full indexing); slope[c-1] belongs to cell c
    slope = minmod(d[_sl(axis, 0, n - 2)], d[_sl(axis, 1, n - 1)])
    # face k+1/2 for k = 1 .. n-3: left state from cell k, right state from k+1
    left = psi[_sl(axis, 1, n - 2)] + 0.5 * slope[_sl(axis, 0, n - 3)]
    right = psi[_sl(axis, 2, n - 1)] - 0.5 * slope[_sl(axis, 1, n - 2)]
    m = mu[:, None, None]
    flux = np.where(m > 0.0, m * left, m * right)
    # interior cell c in [g, n-g) lies between faces c-1/2 (flux[c-2]) and c+1/2 (flux[c-1])
    div = flux[_sl(axis, g - 1, n - g - 1)] - flux[_sl(axis, g - 2, n - g - 2)]
    return -div / h


def _sl(axis, lo, hi):
    idx = [slice(None)] * 3
    idx[axis] = slice(lo, hi)
    return tuple(idx)


def rhs(
    psi: np.ndarray,
    mats: MaterialField,
    grid: Grid2D,
    quad: QuadratureSet,
    s_as: ScatteringMatrix | None = None,
    s_phys: ScatteringMatrix | IsotropicScattering | None = None,
) -> np.ndarray:
    """Time derivative of the as-SN system on interior cells.

    ``s_as`` may be ``None`` (or ``mats.sigma_as`` all zero), which gives the
    plain SN right-hand side without touching the artificial terms.
    """
    if s_phys is None:
        s_phys = build_isotropic_matrix(quad)
    out = _streaming(psi, quad.mu_x, grid.dx, axis=1)
    out += _streaming(psi, quad.mu_y, grid.dy, axis=2)
    inner = interior(psi)
    artificial = s_as is not None and np.any(mats.sigma_as > 0.0)
    sig = mats.sigma_t + mats.sigma_as if artificial else mats.sigma_t
    out -= sig * inner
    out += mats.sigma_s * s_phys.apply(inner)
    if artificial:
        out += mats.sigma_as * s_as.apply(inner)
    out += mats.source_q / FOUR_PI
    return out


def _advance(psi, increment, dt):
    new = psi.copy()
    interior(new)[...] += dt * increment
    return new


def step_heun(state: ExplicitState, mats, grid, quad, s_as=None, s_phys=None, dt=None) -> ExplicitState:
    """One Heun step: ``psi + dt/2 (f(psi) + f(psi + dt f(psi)))``."""
    dt = state.dt if dt is None else dt
    f = lambda p: rhs(p, mats, grid, quad, s_as, s_phys)
    psi = state.psi
    star = _advance(psi, f(psi), dt)
    new = psi.copy()
    interior(new)[...] = 0.5 * interior(psi) + 0.5 * interior(_advance(star, f(star), dt))
    if not np.all(np.isfinite(interior(new))):
        raise SolverError("non-finite angular flux", state.step + 1)
    return replace(state, psi=new, time=state.time + dt, step=state.step + 1)


def integrate(
    psi0: np.ndarray,
    mats: MaterialField,
    grid: Grid2D,
    quad: QuadratureSet,
    t_end: float,
    cfl: float = 0.95,
    s_as: ScatteringMatrix | None = None,
    callback=None,
) -> ExplicitState:
    """Run Heun steps from t = 0 to exactly ``t_end``."""
    s_phys = build_isotropic_matrix(quad)
    dt = stable_dt(grid, quad, cfl, mats)
    state = ExplicitState(psi=psi0.copy(), time=0.0, dt=dt, cfl=cfl)
    while state.time < t_end * (1.0 - 1e-14):
        h = min(dt, t_end - state.time)
        state = step_heun(state, mats, grid, quad, s_as, s_phys, dt=h)
        if callback is not None:
            callback(state)
    log.debug("explicit run finished after %d steps", state.step)
    return state
