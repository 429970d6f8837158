"""Entanglement and teleportation figures of merit for bipartite Gaussian states.

All functions read a 4x4 covariance in (X_m, P_m, X_l, P_l) ordering with
vacuum variance 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ideal import coherent_fidelity
from .state import GaussianState, _symplectic_eigs, partial_transpose


@dataclass(frozen=True)
class EntanglementReport:
    """Figures of merit of one bipartite Gaussian state.

    symplectic_eigs holds (nu_min of the state, nu_min of the partial
    transpose); the second one drives the log-negativity.
    """

    delta_epr: float
    log_negativity: float
    fidelity: float
    entangled: bool
    symplectic_eigs: tuple


def _covariance_of(state) -> np.ndarray:
    cov = state.cov if isinstance(state, GaussianState) else np.asarray(state, dtype=float)
    if cov.shape != (4, 4):
        raise ValueError(f"expected a 4x4 covariance, got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise ValueError("covariance matrix is not symmetric")
    return cov


def epr_variance(state) -> float:
    """Duan EPR variance Var(X_m + P_l) + Var(P_m + X_l).

    Uses the fixed, unweighted quadrature combination; values below 2 certify
    entanglement.
    """
    cov = _covariance_of(state)
    v1 = cov[0, 0] + cov[3, 3] + 2.0 * cov[0, 3]
    v2 = cov[1, 1] + cov[2, 2] + 2.0 * cov[1, 2]
    return float(v1 + v2)


def log_negativity(state, tol: float = None) -> float:
    """Logarithmic negativity E_N = max(0, -ln(2*nu_pt)) of a two-mode state.

    nu_pt is the smallest symplectic eigenvalue of the partially transposed
    covariance. States violating the uncertainty relation by more than tol
    (default: the state's admit_tol, else 1e-9) are rejected.
    """
    cov = _covariance_of(state)
    if tol is None:
        tol = state.admit_tol if isinstance(state, GaussianState) else 1e-9
    nu_min = _symplectic_eigs(cov)[0]
    if nu_min < 0.5 - tol:
        raise ValueError(
            f"covariance violates the uncertainty relation: nu_min = {nu_min} < 1/2"
        )
    nu_pt = _symplectic_eigs(partial_transpose(cov))[0]
    return float(max(0.0, -math.log(2.0 * nu_pt)))


def teleport_fidelity(state) -> float:
    """Coherent-state teleportation fidelity of the state's EPR variance."""
    return coherent_fidelity(epr_variance(state))


def report(state, tol: float = None) -> EntanglementReport:
    """Assemble the full EntanglementReport for one state."""
    cov = _covariance_of(state)
    delta = epr_variance(cov)
    en = log_negativity(state, tol=tol)
    nu_state = _symplectic_eigs(cov)[0]
    nu_pt = _symplectic_eigs(partial_transpose(cov))[0]
    return EntanglementReport(
        delta_epr=delta,
        log_negativity=en,
        fidelity=coherent_fidelity(delta),
        entangled=bool(delta < 2.0),
        symplectic_eigs=(float(nu_state), float(nu_pt)),
    )
