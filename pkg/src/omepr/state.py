"""Bipartite Gaussian state of the mechanics + light-mode system.

Quadrature convention used everywhere in this package: x = (a + a†)/√2,
p = −i(a − a†)/√2, so vacuum variance is 1/2 and [x, p] = i. Covariance
ordering is (X_m, P_m, X_l, P_l).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: symplectic form for two modes in (X_m, P_m, X_l, P_l) ordering
OMEGA = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ]
)


@dataclass
class GaussianState:
    """Mean vector and 4x4 covariance of the bipartite (mechanics, light) system.

    Parameters
    ----------
    cov : ndarray
        4x4 symmetric covariance matrix, vacuum variance 1/2.
    mean : ndarray, optional
        Length-4 mean vector; defaults to zero (all protocols here are
        mean-zero after displacement).
    admit_tol : float
        Absolute tolerance on the uncertainty-relation check. Producers of
        thermally augmented states loosen this by their perturbation size.
    """

    cov: np.ndarray
    mean: np.ndarray = None
    admit_tol: float = 1e-9

    def __post_init__(self):
        self.cov = np.asarray(self.cov, dtype=float)
        if self.cov.shape != (4, 4):
            raise ValueError(f"covariance must be 4x4, got {self.cov.shape}")
        if not np.allclose(self.cov, self.cov.T, atol=1e-10):
            raise ValueError("covariance matrix is not symmetric")
        if self.mean is None:
            self.mean = np.zeros(4)
        self.mean = np.asarray(self.mean, dtype=float)
        if self.mean.shape != (4,):
            raise ValueError(f"mean must have length 4, got {self.mean.shape}")

    def symplectic_eigs(self) -> np.ndarray:
        """Symplectic eigenvalues of the covariance, ascending."""
        return _symplectic_eigs(self.cov)

    def is_physical(self, tol: float = None) -> bool:
        """Check nu_min >= 1/2 - tol (Heisenberg admissibility)."""
        t = self.admit_tol if tol is None else tol
        return bool(self.symplectic_eigs()[0] >= 0.5 - t)


def _symplectic_eigs(cov: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues: moduli of eigenvalues of i*Omega*cov, deduped."""
    ev = np.linalg.eigvals(1j * OMEGA @ cov)
    nus = np.sort(np.abs(ev))
    # eigenvalues come in +/- pairs; keep one of each
    return nus[::2][:2] if nus.size == 4 else nus


def partial_transpose(cov: np.ndarray) -> np.ndarray:
    """Partial transpose on the light mode: P_l -> -P_l."""
    L = np.diag([1.0, 1.0, 1.0, -1.0])
    return L @ cov @ L
