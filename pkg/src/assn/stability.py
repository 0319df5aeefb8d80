"""L2 stability check for the implicit second-order upwind flux.

For ``g_{j+1/2} = 3/2 psi_j - 1/2 psi_{j-1}`` the flux balance
``sum_j (g_{j+1/2} - g_{j-1/2}) psi_j`` equals ``psi^T B psi`` with ``B``
lower triangular (1.5, -2, 0.5 on its bands).  The scheme dissipates
``psi^2 / 2`` iff ``S = (B + B^T) / 2`` is positive definite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

__all__ = [
    "EntropyMatrix",
    "SpectrumReport",
    "stencil_matrix",
    "build_entropy_matrix",
    "banded_cholesky",
    "verify_positive_definite",
    "write_spectrum_csv",
]

PD_THRESHOLD = 1e-12


@dataclass(frozen=True)
class EntropyMatrix:
    """Symmetric pentadiagonal ``S`` stored densely (n is small)."""

    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def banded(self) -> np.ndarray:
        """Lower banded storage ``ab[k, j] = S[j + k, j]`` for k = 0, 1, 2."""
        n = self.n
        ab = np.zeros((3, n))
        for k in range(3):
            ab[k, : n - k] = np.diagonal(self.matrix, -k)
        return ab


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    factorizable: bool

    @property
    def smallest(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def largest(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def positive_definite(self) -> bool:
        return self.factorizable and self.smallest > PD_THRESHOLD


def stencil_matrix(n: int) -> np.ndarray:
    """``B`` with ``(B psi)_j = g_{j+1/2} - g_{j-1/2}``, zero inflow."""
    B = np.zeros((n, n))
    idx = np.arange(n)
    B[idx, idx] = 1.5
    B[idx[1:], idx[:-1]] = -2.0
    B[idx[2:], idx[:-2]] = 0.5
    return B


def build_entropy_matrix(n: int) -> EntropyMatrix:
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    B = stencil_matrix(n)
    return EntropyMatrix(0.5 * (B + B.T))


def banded_cholesky(ab: np.ndarray) -> np.ndarray | None:
    """Cholesky factor of a symmetric matrix in lower banded storage.

    Returns the factor in the same storage, or ``None`` when a pivot is not
    positive (the matrix is not positive definite).
    """
    p, n = ab.shape
    bw = p - 1
    L = np.zeros_like(ab)
    for j in range(n):
        s = ab[0, j] - sum(L[k, j - k] ** 2 for k in range(1, min(bw, j) + 1))
        if not s > 0.0:
            return None
        L[0, j] = np.sqrt(s)
        for i in range(j + 1, min(n, j + bw + 1)):
            # L[i, j] sits at band i - j, column j
            acc = ab[i - j, j]
            for k in range(max(0, i - bw), j):
                acc -= L[i - k, k] * L[j - k, k]
            L[i - j, j] = acc / L[0, j]
    return L


def verify_positive_definite(S: EntropyMatrix) -> SpectrumReport:
    """Factorization test plus the full (ascending) spectrum."""
    ab = S.banded()
    ok = banded_cholesky(ab) is not None
    eig = linalg.eigvals_banded(ab, lower=True)
    return SpectrumReport(eigenvalues=np.sort(eig), factorizable=ok)


def write_spectrum_csv(report: SpectrumReport, path, header: str | None = None) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write("index,eigenvalue\n")
        for i, v in enumerate(report.eigenvalues):
            fh.write(f"{i},{float(v)!r}\n")
