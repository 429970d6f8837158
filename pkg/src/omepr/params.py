"""Physical and dimensionless parameter sets and the conversions between them.

All frequencies and rates are angular (rad/s) inside the package; the CLI and
config files speak Hz and convert once at the boundary. hbar = 1 internally,
except in the photon-number to optical-power conversion where SI constants
enter in one place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from scipy.constants import c as _c_light
from scipy.constants import hbar as _hbar
from scipy.constants import k as _k_B

FLAG_PASS = "pass"
FLAG_WARN = "warn"
FLAG_FAIL = "fail"


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional description of the pulsed optomechanical system.

    Parameters
    ----------
    omega_m : float
        Mechanical angular frequency (rad/s).
    kappa : float
        Cavity amplitude decay rate (rad/s).
    gamma : float
        Mechanical damping rate (rad/s).
    g0 : float
        Single-photon coupling (rad/s).
    g : float
        Effective (pump-enhanced) coupling (rad/s).
    detuning : float
        Laser detuning Delta = omega_c - omega_l (rad/s). Negative detuning
        drives the entangler, positive the readout beam-splitter.
    tau : float
        Pulse duration (s).
    n_bar : float
        Mean bath occupation.
    n0 : float
        Initial mechanical occupation (independent input, often pre-cooled
        below n_bar).
    lambda_l : float, optional
        Laser wavelength (m), only used for power reporting.
    """

    omega_m: float
    kappa: float
    gamma: float
    g0: float
    g: float
    detuning: float
    tau: float
    n_bar: float
    n0: float
    lambda_l: Optional[float] = None

    def __post_init__(self):
        for name in ("omega_m", "kappa", "gamma", "g", "tau"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be strictly positive, got {v}")
        # g0 = 0 is a legal degenerate case (bare cavity, no backaction)
        if not (self.g0 >= 0 and math.isfinite(self.g0)):
            raise ValueError(f"g0 must be nonnegative, got {self.g0}")
        if self.n_bar < 0 or self.n0 < 0:
            raise ValueError("occupations must be nonnegative")
        if not math.isfinite(self.detuning):
            raise ValueError("detuning must be finite")
        if not self.Q > 1:
            raise ValueError(f"Q = omega_m/gamma = {self.Q} must exceed 1")

    @property
    def Q(self) -> float:
        """Mechanical quality factor omega_m/gamma."""
        return self.omega_m / self.gamma


@dataclass(frozen=True)
class DimensionlessParams:
    """Optimization coordinates (eta, xi, epsilon) plus occupations and Q.

    eta = kappa/omega_m (sideband resolution), xi = g/kappa (adiabaticity),
    epsilon = gamma*tau (pulse length over mechanical coherence time).

    The derived squeezing parameter is r = G*tau with G = g^2/kappa, which in
    these coordinates is the algebraic identity r = xi^2 * eta * epsilon * Q.
    """

    eta: float
    xi: float
    epsilon: float
    n_bar: float
    n0: float
    Q: float

    def __post_init__(self):
        for name in ("eta", "xi", "epsilon", "Q"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be strictly positive, got {v}")
        if self.n_bar < 0 or self.n0 < 0:
            raise ValueError("occupations must be nonnegative")

    @property
    def r(self) -> float:
        """Squeezing parameter G*tau = xi^2 * eta * epsilon * Q."""
        return self.xi**2 * self.eta * self.epsilon * self.Q

    @property
    def omega_tau(self) -> float:
        """Dimensionless pulse length omega_m*tau = epsilon*Q."""
        return self.epsilon * self.Q


def to_dimensionless(p: PhysicalParams) -> DimensionlessParams:
    """Map a physical parameter set onto (eta, xi, epsilon, n_bar, n0, Q)."""
    return DimensionlessParams(
        eta=p.kappa / p.omega_m,
        xi=p.g / p.kappa,
        epsilon=p.gamma * p.tau,
        n_bar=p.n_bar,
        n0=p.n0,
        Q=p.Q,
    )


def to_physical(
    d: DimensionlessParams,
    omega_m: float,
    g0: float,
    detuning_sign: float = -1.0,
    lambda_l: Optional[float] = None,
) -> PhysicalParams:
    """Reconstruct dimensional parameters from dimensionless ones.

    omega_m sets the scale and g0 is carried through; the detuning is placed
    at detuning_sign * omega_m (the entangler by default).
    """
    kappa = d.eta * omega_m
    return PhysicalParams(
        omega_m=omega_m,
        kappa=kappa,
        gamma=omega_m / d.Q,
        g0=g0,
        g=d.xi * kappa,
        detuning=detuning_sign * omega_m,
        tau=d.epsilon * d.Q / omega_m,
        n_bar=d.n_bar,
        n0=d.n0,
        lambda_l=lambda_l,
    )


def effective_coupling(g0: float, kappa: float, detuning: float, n_ph: float, tau: float) -> float:
    """Pump-enhanced coupling g = g0 * sqrt(2*kappa/(Delta^2+kappa^2) * N_ph/tau).

    The detuning enters squared, so either sign is accepted.
    """
    for name, v in (("g0", g0), ("kappa", kappa), ("tau", tau)):
        if not v > 0:
            raise ValueError(f"{name} must be strictly positive, got {v}")
    if n_ph < 0:
        raise ValueError(f"n_ph must be nonnegative, got {n_ph}")
    return g0 * math.sqrt(2.0 * kappa / (detuning**2 + kappa**2) * n_ph / tau)


def photons_for_coupling(g: float, g0: float, kappa: float, detuning: float, tau: float) -> float:
    """Pulse photon number N_ph needed to reach coupling g; inverse of effective_coupling."""
    for name, v in (("g0", g0), ("kappa", kappa), ("tau", tau)):
        if not v > 0:
            raise ValueError(f"{name} must be strictly positive, got {v}")
    if g < 0:
        raise ValueError(f"g must be nonnegative, got {g}")
    return (g / g0) ** 2 * tau * (detuning**2 + kappa**2) / (2.0 * kappa)


def mean_power(n_ph: float, tau: float, lambda_l: Optional[float]) -> Optional[float]:
    """Mean optical power P = hbar*omega_l*N_ph/tau in watts.

    Returns None when no wavelength is given (the power field is then absent
    from reports, not zero).
    """
    if lambda_l is None:
        return None
    omega_l = 2.0 * math.pi * _c_light / lambda_l  # rad/s
    return _hbar * omega_l * n_ph / tau


def occupation_from_temperature(omega_m: float, T: float) -> float:
    """Bose-Einstein occupation 1/(exp(hbar*omega/k_B*T) - 1); 0 at T = 0."""
    if T < 0:
        raise ValueError(f"temperature must be nonnegative, got {T}")
    if T == 0:
        return 0.0
    x = _hbar * omega_m / (_k_B * T)
    return 1.0 / math.expm1(x)


def high_temperature_occupation(omega_m: float, T: float) -> float:
    """Classical-limit occupation k_B*T/(hbar*omega), for cross-checks."""
    return _k_B * T / (_hbar * omega_m)


@dataclass(frozen=True)
class HierarchyRatio:
    name: str
    value: float
    flag: str


@dataclass(frozen=True)
class HierarchyReport:
    """Diagnostics for the working-regime rate hierarchy.

    The protocol wants n_bar*gamma*tau << 1 << g*tau and g << kappa << omega_m,
    so the four reported ratios should all be small.
    """

    ratios: tuple

    @property
    def all_pass(self) -> bool:
        return all(r.flag == FLAG_PASS for r in self.ratios)

    @property
    def any_fail(self) -> bool:
        return any(r.flag == FLAG_FAIL for r in self.ratios)


def _flag(value: float) -> str:
    if value > 1.0:
        return FLAG_FAIL
    if value > 0.5:
        return FLAG_WARN
    return FLAG_PASS


def validate_hierarchy(p: PhysicalParams) -> HierarchyReport:
    """Evaluate the four hierarchy ratios with pass/warn/fail flags.

    Flags: pass <= 0.5 < warn <= 1 < fail.
    """
    ratios = (
        HierarchyRatio("n_bar*gamma*tau", p.n_bar * p.gamma * p.tau, ""),
        HierarchyRatio("1/(g*tau)", 1.0 / (p.g * p.tau), ""),
        HierarchyRatio("g/kappa", p.g / p.kappa, ""),
        HierarchyRatio("kappa/omega_m", p.kappa / p.omega_m, ""),
    )
    flagged = tuple(replace(r, flag=_flag(r.value)) for r in ratios)
    return HierarchyReport(ratios=flagged)
