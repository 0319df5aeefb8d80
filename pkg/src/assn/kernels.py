"""Scattering kernels, their discrete matrices and moment maps.

The artificial kernel is the normalized Gaussian in ``1 - mu``::

    s_eps(mu) = 2 / (sqrt(pi) * eps * erf(2/eps)) * exp(-(1 - mu)**2 / eps**2)

Discrete in-scattering matrices are row-normalized, ``A[q, p] = w_p c_q s(O_q . O_p)``
with ``c_q = 1 / sum_p w_p s(O_q . O_p)``, so an isotropic flux is a fixed point.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse, special

from .quadrature import FOUR_PI, QuadratureSet

__all__ = [
    "ArtificialKernelParams",
    "ScatteringMatrix",
    "IsotropicScattering",
    "MomentMaps",
    "s_eps",
    "build_as_matrix",
    "build_isotropic_matrix",
    "transport_coefficient",
    "legendre_moment",
    "real_spherical_harmonics",
    "build_moment_maps",
    "export_matrix_csv",
]

SPARSITY_THRESHOLD = 1e-12


@dataclass(frozen=True)
class ArtificialKernelParams:
    """Strength ``sigma_as`` and width constant ``beta``; ``epsilon = beta / nq``."""

    beta: float
    sigma_as: float
    nq: int

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta!r}")
        if self.sigma_as < 0:
            raise ValueError(f"sigma_as must be nonnegative, got {self.sigma_as!r}")

    @property
    def epsilon(self) -> float:
        return self.beta / self.nq

    @property
    def active(self) -> bool:
        return self.sigma_as > 0


def _check_eps(epsilon: float) -> None:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")


def s_eps(mu, epsilon: float):
    """Forward-peaked Gaussian kernel, normalized to unit integral over [-1, 1]."""
    _check_eps(epsilon)
    mu = np.asarray(mu, dtype=float)
    norm = 2.0 / (np.sqrt(np.pi) * epsilon * special.erf(2.0 / epsilon))
    return norm * np.exp(-((1.0 - mu) ** 2) / epsilon**2)


@dataclass(frozen=True)
class ScatteringMatrix:
    """Sparse row-stochastic in-scattering matrix.

    ``entries[q, p] = w_p * row_norms[q] * s(O_q . O_p)``.
    """

    entries: sparse.csr_matrix
    row_norms: np.ndarray

    @property
    def nq(self) -> int:
        return self.entries.shape[0]

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Apply to an array whose leading axis is the ordinate index."""
        flat = psi.reshape(psi.shape[0], -1)
        return np.asarray(self.entries @ flat).reshape(psi.shape)


@dataclass(frozen=True)
class IsotropicScattering:
    """Isotropic kernel ``s = 1/(4 pi)``, applied as a rank-one product."""

    weights: np.ndarray
    row_norms: np.ndarray

    @property
    def nq(self) -> int:
        return len(self.weights)

    @property
    def entries(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(np.outer(self.row_norms / FOUR_PI, self.weights))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        phi = np.tensordot(self.weights, psi, axes=(0, 0))
        return (self.row_norms / FOUR_PI)[(slice(None),) + (None,) * phi.ndim] * phi


def build_isotropic_matrix(quad: QuadratureSet) -> IsotropicScattering:
    c = 1.0 / (quad.weights.sum() / FOUR_PI)
    return IsotropicScattering(weights=quad.weights.copy(), row_norms=np.full(quad.nq, c))


def build_as_matrix(
    quad: QuadratureSet, epsilon: float, threshold: float = SPARSITY_THRESHOLD
) -> ScatteringMatrix:
    """Discrete artificial in-scattering matrix for kernel width ``epsilon``.

    Kernel values below ``threshold * s_eps(1)`` are dropped before the row
    normalization, so rows stay stochastic.
    """
    _check_eps(epsilon)
    mu = np.clip(quad.points @ quad.points.T, -1.0, 1.0)
    kern = s_eps(mu, epsilon)
    kern[kern < threshold * s_eps(1.0, epsilon)] = 0.0
    vals = kern * quad.weights[None, :]
    row_norms = 1.0 / vals.sum(axis=1)
    entries = sparse.csr_matrix(vals * row_norms[:, None])
    return ScatteringMatrix(entries=entries, row_norms=row_norms)


def transport_coefficient(i: int, epsilon: float) -> float:
    """``p_{eps,i}``, the i-th moment of ``1 - mu`` under ``s_eps``.

    Closed form ``eps**i * gamma_lower((1+i)/2, 4/eps**2) / gamma_lower(1/2, 4/eps**2)``;
    the denominator is ``sqrt(pi) * erf(2/eps)``.
    """
    _check_eps(epsilon)
    if i < 0:
        raise ValueError("i must be nonnegative")
    a = 0.5 * (1 + i)
    x = 4.0 / epsilon**2
    ratio = special.gamma(a) / special.gamma(0.5)
    return epsilon**i * ratio * (special.gammainc(a, x) / special.gammainc(0.5, x))


def legendre_moment(n: int, epsilon: float) -> float:
    """``k_{eps,n} = 2 pi * int_{-1}^{1} s_eps(mu) P_n(mu) dmu`` by Gauss-Legendre.

    The nodes are placed on the part of [-1, 1] where the kernel is above
    underflow, ``mu >= 1 - 27 eps``.
    """
    _check_eps(epsilon)
    nodes = max(200, 10 * n)
    lo = max(-1.0, 1.0 - 27.0 * epsilon)
    x, w = np.polynomial.legendre.leggauss(nodes)
    mu = 0.5 * (1.0 - lo) * x + 0.5 * (1.0 + lo)
    w = 0.5 * (1.0 - lo) * w
    return 2.0 * np.pi * float(np.sum(w * s_eps(mu, epsilon) * special.eval_legendre(n, mu)))


def real_spherical_harmonics(points: np.ndarray, n_moments: int) -> np.ndarray:
    """Orthonormal real spherical harmonics at ``points``.

    Returns
    -------
    Y : ndarray, shape (len(points), n_moments)
        Columns ordered by degree ``l`` and then ``m = -l..l``.
    degrees : ndarray of int
        Degree ``l`` of every column.
    """
    x, y, z = points.T
    polar = np.arccos(np.clip(z, -1.0, 1.0))
    azim = np.arctan2(y, x)
    cols, degrees = [], []
    lmax = int(np.ceil(np.sqrt(n_moments))) - 1
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            if len(cols) == n_moments:
                break
            ylm = special.sph_harm_y(l, abs(m), polar, azim)
            if m < 0:
                col = np.sqrt(2.0) * (-1) ** m * ylm.imag
            elif m == 0:
                col = ylm.real
            else:
                col = np.sqrt(2.0) * (-1) ** m * ylm.real
            cols.append(col)
            degrees.append(l)
    return np.column_stack(cols), np.array(degrees)


@dataclass(frozen=True)
class MomentMaps:
    """Maps between ordinate and moment space.

    ``M`` (n_moments, nq) takes ordinates to moments with ``(M psi)[0]`` the
    scalar flux; ``O`` (nq, n_moments) maps back, so that ``O @ M`` projects
    onto the harmonic subspace.  ``sigma`` and ``sigma_as`` hold the diagonal
    kernel coefficients such that ``S+ = O diag(sigma) M``.
    """

    M: np.ndarray
    O: np.ndarray
    sigma: np.ndarray
    sigma_as: np.ndarray | None = None

    @property
    def n_moments(self) -> int:
        return self.M.shape[0]

    def to_moments(self, psi: np.ndarray) -> np.ndarray:
        return np.tensordot(self.M, psi, axes=(1, 0))

    def to_ordinates(self, phi: np.ndarray) -> np.ndarray:
        return np.tensordot(self.O, phi, axes=(1, 0))

    def scatter(self, phi: np.ndarray) -> np.ndarray:
        """``O diag(sigma) phi`` for the physical kernel."""
        return self.to_ordinates(self.sigma[(slice(None),) + (None,) * (phi.ndim - 1)] * phi)


def build_moment_maps(
    quad: QuadratureSet, n_moments: int = 1, epsilon: float | None = None
) -> MomentMaps:
    """Moment maps for isotropic physical scattering.

    Harmonics are scaled by ``sqrt(4 pi)`` in ``M`` and by its inverse in
    ``O``; the kernel coefficients are then the Legendre moments
    ``k_n = 2 pi int s P_n``, i.e. 1 for the isotropic kernel at ``n = 0``.
    When ``epsilon`` is given, ``sigma_as`` holds ``k_{eps,n} / k_{eps,0}``,
    the eigenvalues of the unit-mass artificial kernel.
    """
    if n_moments < 1:
        raise ValueError("n_moments must be >= 1")
    Y, degrees = real_spherical_harmonics(quad.points, n_moments)
    scale = np.sqrt(FOUR_PI)
    M = scale * (Y * quad.weights[:, None]).T
    O = Y / scale
    gram = M @ O
    if np.max(np.abs(gram - np.eye(n_moments))) > 1e-8:
        warnings.warn(
            f"{n_moments} moments exceed the exactness of the {quad.nq}-point quadrature",
            stacklevel=2,
        )
    sigma = np.zeros(n_moments)
    sigma[0] = 1.0
    sigma_as = None
    if epsilon is not None:
        k = {l: legendre_moment(l, epsilon) for l in set(degrees.tolist()) | {0}}
        sigma_as = np.array([k[l] / k[0] for l in degrees])
    return MomentMaps(M=M, O=O, sigma=sigma, sigma_as=sigma_as)


def export_matrix_csv(matrix, path) -> None:
    """Debug dump of a scattering matrix as ``row,col,value``."""
    coo = sparse.coo_matrix(matrix.entries)
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r},{c},{float(v)!r}\n")
