"""Analog Monte Carlo reference for the line-source problem.

Particles start isotropically at the origin at t = 0, fly at unit speed with
exponential free paths (rate sigma_t) and scatter isotropically; there is no
absorption.  At ``t_end`` every particle is binned by its (x, y) position.
Since the speed is one, particle density equals scalar flux, so the census
count per unit area is the cell-averaged scalar flux of a unit-strength
source.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .mesh import Grid2D

__all__ = ["census_positions", "census_flux", "default_threads"]

BATCH = 250_000


def default_threads() -> int:
    env = os.environ.get("ASSN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _isotropic(rng, n):
    mu = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    s = np.sqrt(1.0 - mu * mu)
    return s * np.cos(phi), s * np.sin(phi)


def census_positions(n: int, t_end: float, rng: np.random.Generator, sigma_t: float = 1.0):
    """Positions at ``t_end`` of ``n`` particle histories (x, y arrays)."""
    x = np.zeros(n)
    y = np.zeros(n)
    t = np.zeros(n)
    ux, uy = _isotropic(rng, n)
    alive = np.arange(n)
    while alive.size:
        s = rng.exponential(1.0 / sigma_t, alive.size)
        remaining = t_end - t[alive]
        hit = s < remaining
        step = np.where(hit, s, remaining)
        x[alive] += step * ux[alive]
        y[alive] += step * uy[alive]
        t[alive] += step
        alive = alive[hit]
        ux[alive], uy[alive] = _isotropic(rng, alive.size)
    return x, y


def _batch_histogram(args):
    seed_seq, n, grid, t_end, sigma_t = args
    rng = np.random.Generator(np.random.Philox(seed_seq))
    x, y = census_positions(n, t_end, rng, sigma_t)
    xe, ye = grid.edges()
    counts, _, _ = np.histogram2d(x, y, bins=[xe, ye])
    return counts, n - counts.sum()


def census_flux(
    n_particles: int,
    grid: Grid2D,
    t_end: float,
    seed: int,
    sigma_t: float = 1.0,
    threads: int | None = None,
):
    """Cell-averaged scalar flux at ``t_end`` and the number of escaped particles.

    The particle count is split into fixed batches with independent Philox
    streams spawned from ``seed``; the result does not depend on ``threads``.
    """
    sizes = [BATCH] * (n_particles // BATCH)
    if n_particles % BATCH:
        sizes.append(n_particles % BATCH)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(ss, n, grid, t_end, sigma_t) for ss, n in zip(streams, sizes)]
    threads = threads or default_threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(_batch_histogram, jobs))
    else:
        results = [_batch_histogram(j) for j in jobs]
    counts = np.zeros(grid.shape)
    lost = 0.0
    for c, out in results:  # fixed order keeps the sum reproducible
        counts += c
        lost += out
    return counts / (n_particles * grid.cell_area), int(lost)
