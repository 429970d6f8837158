"""Closed-form protocol in the RWA/adiabatic limit.

Blue-detuned driving realizes a two-mode squeezer between the mechanical mode
and a rising-exponential temporal light mode; red-detuned driving realizes the
beam-splitter readout. These closed forms are the baseline every numerical
result must approach when eta, xi -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .state import GaussianState


@dataclass(frozen=True)
class TwoModeSqueezeMap:
    """Bogoliubov coefficients of the entangling pulse.

    A_out = -cosh_like * A_in - i * sinh_like * B_in†
    B_out =  cosh_like * B_in + i * sinh_like * A_in†

    with cosh_like = e^r and sinh_like = sqrt(e^{2r} - 1). Note the map is a
    two-mode squeeze composed with phase flips, not the textbook symmetric
    form; the signs and factors of i are load-bearing for the quadrature
    pairing (X_m + P_l, P_m + X_l).
    """

    cosh_like: float
    sinh_like: float
    r: float

    def bogoliubov_defect(self) -> float:
        """cosh_like^2 - sinh_like^2 - 1, zero for a canonical map."""
        return self.cosh_like**2 - self.sinh_like**2 - 1.0


@dataclass(frozen=True)
class SwapMap:
    """Beam-splitter coefficients of the red-detuned readout pulse.

    A'_out = -transmit * A'_in + i * swap * B_in
    B_out  =  transmit * B_in  - i * swap * A'_in
    """

    transmit: float
    swap: float

    def unitarity_defect(self) -> float:
        """transmit^2 + swap^2 - 1, zero for a lossless map."""
        return self.transmit**2 + self.swap**2 - 1.0


def _squeeze_deficit(r: float) -> float:
    """e^r - sqrt(e^{2r} - 1), evaluated cancellation-free as 1/(e^r + sqrt(e^{2r}-1))."""
    er = math.exp(r)
    return 1.0 / (er + math.sqrt(er * er - 1.0))


def epr_variance_ideal(r: float, n0: float) -> float:
    """EPR variance 2*(n0+1)*(e^r - sqrt(e^{2r}-1))^2 of the ideal protocol.

    r is the squeezing parameter G*tau and n0 the initial mechanical
    occupation. The state is entangled iff the result is below 2.
    """
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    if n0 < 0:
        raise ValueError(f"n0 must be nonnegative, got {n0}")
    return 2.0 * (n0 + 1.0) * _squeeze_deficit(r) ** 2


def squeezing_threshold(n0: float) -> float:
    """Squeezing r0 above which the ideal protocol entangles a mirror at n0.

    r0 = (1/2) * ln((n0+2)^2 / (4*(n0+1))); grows like (1/2) ln n0.
    """
    if n0 < 0:
        raise ValueError(f"n0 must be nonnegative, got {n0}")
    return 0.5 * math.log((n0 + 2.0) ** 2 / (4.0 * (n0 + 1.0)))


def entangle_map(r: float) -> TwoModeSqueezeMap:
    """Two-mode squeeze map of the blue-detuned pulse at squeezing r."""
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    er = math.exp(r)
    return TwoModeSqueezeMap(cosh_like=er, sinh_like=math.sqrt(er * er - 1.0), r=r)


def swap_map(G_tau: float) -> SwapMap:
    """Beam-splitter map of the red-detuned readout pulse at G*tau."""
    if G_tau < 0:
        raise ValueError(f"G_tau must be nonnegative, got {G_tau}")
    t = math.exp(-G_tau)
    return SwapMap(transmit=t, swap=math.sqrt(max(0.0, 1.0 - t * t)))


def ideal_output_state(
    r: float, n0: float, n_bar: float = 0.0, epsilon: float = 0.0
) -> GaussianState:
    """Gaussian state produced by the closed-form entangling map.

    Mechanics starts thermal at n0, the light mode in vacuum; the thermal
    decoherence term adds epsilon*(n_bar + 1/2) to the mechanical
    quadratures, reproducing the additive (2 n_bar + 1) epsilon in the EPR
    variance.
    """
    m = entangle_map(r)
    s, q = m.cosh_like, m.sinh_like
    # operator rows over (b, b†, a, a†); mech mode first, matching the
    # (X_m, P_m, X_l, P_l) covariance ordering
    vecs = (np.array([s, 0.0, 0.0, 1j * q]), np.array([0.0, -1j * q, -s, 0.0]))
    perm = [1, 0, 3, 2]
    S0 = np.zeros((4, 4))
    S0[0, 1] = S0[1, 0] = n0 + 0.5
    S0[2, 3] = S0[3, 2] = 0.5
    rows = []
    for v in vecs:
        vd = np.conj(v)[perm]
        rows.append((v + vd) / math.sqrt(2.0))
        rows.append(-1j * (v - vd) / math.sqrt(2.0))
    cov = np.array([[np.real(ri @ S0 @ rj) for rj in rows] for ri in rows])
    add = epsilon * (n_bar + 0.5)
    cov[0, 0] += add
    cov[1, 1] += add
    return GaussianState(cov, admit_tol=1e-9 + epsilon)


def teleport_added_noise(r: float, n0: float) -> tuple:
    """Added noise per quadrature after the teleportation feedback.

    Each of the two quadratures gains half of the EPR variance, so the total
    added noise equals the EPR variance itself.
    """
    half = 0.5 * epr_variance_ideal(r, n0)
    return (half, half)


def coherent_fidelity(delta_epr: float) -> float:
    """Coherent-state teleportation fidelity F = 1/(1 + Delta_EPR/2).

    F > 1/2 exactly when the resource state is entangled (Delta_EPR < 2).
    """
    if delta_epr < 0:
        raise ValueError(f"delta_epr must be nonnegative, got {delta_epr}")
    return 1.0 / (1.0 + 0.5 * delta_epr)
