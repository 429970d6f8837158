"""Classical pulse amplitudes and envelope validation.

Solves the coupled nonlinear mean-field equations for the cavity amplitude
alpha(t) and mirror amplitude beta(t) under a normalized drive envelope,

    d(alpha)/dt = -{ i [Delta_0 + g0 (beta + conj(beta))] + kappa } alpha + E(t)
    d(beta)/dt  = i omega_m beta + i g0 |alpha|^2

with alpha(0) = beta(0) = 0 and E(t) = sqrt(2 kappa N_ph) eps(t). The cavity
rotation sign matches the linear quadrature drift (a_c evolving under
-(i Delta + kappa)), so the adiabatic plateau E/(i Delta + kappa) is the
steady branch of the same equation. The adiabatic solution and the slope
bounds quantify how well a given envelope justifies the constant-coefficient
linearized model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .params import (
    FLAG_FAIL,
    FLAG_PASS,
    FLAG_WARN,
    HierarchyRatio,
    PhysicalParams,
    photons_for_coupling,
)


def _quad_weights(n: int, h: float) -> np.ndarray:
    """Composite Boole weights; n must be 4k+1 samples."""
    from .dynamics import _boole_weights

    return _boole_weights(n, h)


@dataclass(frozen=True)
class PulseEnvelope:
    """Normalized drive envelope eps(t) sampled on a uniform grid.

    Invariants: ∫|eps|^2 dt = 1; the plateau is flat to 1e-6 of its value,
    which sits near 1/sqrt(tau) (exactly so only for vanishing ramps, since
    the normalization is exact).
    """

    grid: np.ndarray
    values: np.ndarray
    ramp_fraction: float
    func: Optional[Callable] = field(default=None, compare=False, repr=False)
    dfunc: Optional[Callable] = field(default=None, compare=False, repr=False)

    @property
    def tau(self) -> float:
        return float(self.grid[-1])

    def norm_defect(self) -> float:
        """|∫|eps|^2 dt - 1| by composite quadrature."""
        w = _quad_weights(self.grid.size, self.grid[1] - self.grid[0])
        return abs(float(np.sum(w * np.abs(self.values) ** 2)) - 1.0)

    def plateau_mask(self) -> np.ndarray:
        r = self.ramp_fraction * self.tau
        return (self.grid >= r) & (self.grid <= self.tau - r)

    def plateau_value(self) -> complex:
        return complex(np.mean(self.values[self.plateau_mask()]))

    def flatness(self) -> float:
        """Peak-to-peak plateau variation relative to the plateau value."""
        pv = self.values[self.plateau_mask()]
        return float(np.ptp(np.abs(pv)) / np.abs(np.mean(pv)))

    def __call__(self, t):
        if self.func is not None:
            return self.func(t)
        spline = CubicSpline(self.grid, self.values)
        return spline(t)

    @classmethod
    def raised_cosine(
        cls, tau: float, ramp_fraction: float = 0.1, panels: int = 4096
    ) -> "PulseEnvelope":
        """Flat-top envelope with sine-squared head and tail ramps.

        The amplitude is fixed analytically so the norm is exact:
        ∫ ramp^2 = (3/8) t_ramp per side, hence A = (tau - 5/4 t_ramp)^(-1/2).
        """
        if not 0.0 <= ramp_fraction < 0.5:
            raise ValueError("ramp_fraction must lie in [0, 0.5)")
        tr = ramp_fraction * tau
        amp = 1.0 / math.sqrt(tau - 1.25 * tr)

        def eps(t):
            t = np.asarray(t, dtype=float)
            out = np.full(t.shape, amp, dtype=float)
            if tr > 0:
                head = t < tr
                tail = t > tau - tr
                out[head] = amp * np.sin(0.5 * math.pi * t[head] / tr) ** 2
                out[tail] = amp * np.sin(0.5 * math.pi * (tau - t[tail]) / tr) ** 2
            return out if out.shape else float(out)

        def deps(t):
            t = np.asarray(t, dtype=float)
            out = np.zeros(t.shape, dtype=float)
            if tr > 0:
                head = t < tr
                tail = t > tau - tr
                out[head] = amp * (0.5 * math.pi / tr) * np.sin(math.pi * t[head] / tr)
                out[tail] = -amp * (0.5 * math.pi / tr) * np.sin(math.pi * (tau - t[tail]) / tr)
            return out if out.shape else float(out)

        panels = ((panels + 3) // 4) * 4
        grid = np.linspace(0.0, tau, panels + 1)
        return cls(
            grid=grid,
            values=eps(grid).astype(complex),
            ramp_fraction=ramp_fraction,
            func=eps,
            dfunc=deps,
        )


@dataclass(frozen=True)
class AmplitudeSolution:
    """Trajectories of the mean-field amplitudes on the envelope grid."""

    grid: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    delta_eff: np.ndarray
    delta_bound: float
    delta0: float
    n_ph: float
    plateau_mask: np.ndarray

    def min_plateau_alpha(self) -> float:
        """Smallest |alpha| on the plateau; the linearization wants this >> 1."""
        return float(np.min(np.abs(self.alpha[self.plateau_mask])))

    def plateau_coupling(self, g0: float) -> float:
        """Mean effective coupling g = g0 |alpha| over the plateau."""
        return g0 * float(np.mean(np.abs(self.alpha[self.plateau_mask])))


def _drive_scale(params: PhysicalParams, n_ph: Optional[float]) -> float:
    if n_ph is None:
        if params.g0 == 0.0:
            raise ValueError("n_ph must be given explicitly when g0 is zero")
        n_ph = photons_for_coupling(
            params.g, params.g0, params.kappa, params.detuning, params.tau
        )
    return float(n_ph)


def _locked_delta0(params: PhysicalParams, n_ph: float, envelope: PulseEnvelope,
                   locked: bool) -> float:
    """Bare detuning that parks the plateau effective detuning on target.

    On the plateau the static spring shift is -2 g0^2 |alpha|^2 / omega_m
    with |alpha|^2 = |E|^2/(Delta^2 + kappa^2), so locking amounts to a
    one-shot correction of Delta_0.
    """
    if not locked or params.g0 == 0.0:
        return params.detuning
    e_pl = abs(envelope.plateau_value()) * math.sqrt(2.0 * params.kappa * n_ph)
    alpha2 = e_pl**2 / (params.detuning**2 + params.kappa**2)
    return params.detuning + 2.0 * params.g0**2 * alpha2 / params.omega_m


def _slope_bound(params: PhysicalParams, envelope: PulseEnvelope, n_ph: float) -> float:
    """sup|dE/dt| / (kappa |E_plateau|), infinite for discontinuous envelopes."""
    vals = np.abs(envelope.values)
    plateau = abs(envelope.plateau_value())
    jumps = np.abs(np.diff(envelope.values))
    if jumps.size and np.max(jumps) > 0.5 * plateau:
        return math.inf
    if envelope.dfunc is not None:
        dense = np.linspace(0.0, envelope.tau, 8193)
        dmax = float(np.max(np.abs(envelope.dfunc(dense))))
    else:
        dmax = float(np.max(np.abs(np.gradient(envelope.values, envelope.grid))))
    return dmax / (params.kappa * plateau)


def solve_amplitudes(
    params: PhysicalParams,
    envelope: PulseEnvelope,
    n_ph: Optional[float] = None,
    locked: bool = True,
    rtol: float = 1e-10,
) -> AmplitudeSolution:
    """Adaptive integration of the coupled mean-field equations.

    n_ph defaults to the photon number that reproduces params.g on the
    plateau. With locked=True (default) the bare detuning is offset so the
    effective detuning settles on params.detuning.
    """
    if envelope.norm_defect() > 1e-3:
        raise ValueError(f"envelope is not normalized: defect {envelope.norm_defect():.3e}")
    n_ph = _drive_scale(params, n_ph)
    delta0 = _locked_delta0(params, n_ph, envelope, locked)
    scale = math.sqrt(2.0 * params.kappa * n_ph)
    g0, omega, kappa = params.g0, params.omega_m, params.kappa

    def rhs(t, y):
        al = y[0] + 1j * y[1]
        be = y[2] + 1j * y[3]
        E = scale * envelope(t)
        dal = -(1j * (delta0 + g0 * 2.0 * be.real) + kappa) * al + E
        dbe = 1j * omega * be + 1j * g0 * (al.real**2 + al.imag**2)
        return [dal.real, dal.imag, dbe.real, dbe.imag]

    # scale-aware absolute tolerances keep the adaptive controller honest
    a_pl = scale * abs(envelope.plateau_value()) / math.hypot(params.detuning, kappa)
    atol_a = max(1.0, a_pl) * rtol * 1e-2
    atol_b = max(1.0, g0 * a_pl**2 / omega) * rtol * 1e-2
    with np.errstate(over="ignore", invalid="ignore"):
        # rejected trial steps can overshoot into overflow before the
        # controller shrinks the step; that is routine, not an error
        sol = solve_ivp(
            rhs,
            (0.0, envelope.tau),
            [0.0, 0.0, 0.0, 0.0],
            t_eval=envelope.grid,
            method="DOP853",
            rtol=rtol,
            atol=[atol_a, atol_a, atol_b, atol_b],
        )
    if not sol.success:
        raise RuntimeError(f"amplitude integration failed at t = {sol.t[-1]:.6g}: {sol.message}")
    alpha = sol.y[0] + 1j * sol.y[1]
    beta = sol.y[2] + 1j * sol.y[3]
    delta_eff = delta0 + 2.0 * g0 * beta.real
    return AmplitudeSolution(
        grid=envelope.grid,
        alpha=alpha,
        beta=beta,
        delta_eff=delta_eff,
        delta_bound=_slope_bound(params, envelope, n_ph),
        delta0=delta0,
        n_ph=n_ph,
        plateau_mask=envelope.plateau_mask(),
    )


def adiabatic_amplitudes(
    params: PhysicalParams,
    envelope: PulseEnvelope,
    n_ph: Optional[float] = None,
    locked: bool = True,
) -> AmplitudeSolution:
    """Closed-form slow-envelope solution.

    alpha(t) = E(t)/(i Delta + kappa) at the locked effective detuning,
    beta(t) = -(g0/omega_m) |alpha(t)|^2, and the effective detuning follows
    the static spring shift.
    """
    n_ph = _drive_scale(params, n_ph)
    delta0 = _locked_delta0(params, n_ph, envelope, locked)
    scale = math.sqrt(2.0 * params.kappa * n_ph)
    E = scale * envelope.values
    alpha = E / (1j * params.detuning + params.kappa)
    beta = -(params.g0 / params.omega_m) * np.abs(alpha) ** 2 + 0.0j
    delta_eff = delta0 - 2.0 * params.g0**2 * np.abs(alpha) ** 2 / params.omega_m
    return AmplitudeSolution(
        grid=envelope.grid,
        alpha=alpha,
        beta=beta,
        delta_eff=delta_eff,
        delta_bound=_slope_bound(params, envelope, n_ph),
        delta0=delta0,
        n_ph=n_ph,
        plateau_mask=envelope.plateau_mask(),
    )


@dataclass(frozen=True)
class EnvelopeReport:
    """Diagnostics that justify the constant-coefficient linearized model.

    Each ratio should be small against 1: the slope bound sup|dE/dt|/(kappa|E|),
    the slow-variation measure max(d|alpha|^2/dt)/omega_m normalized by the
    plateau |alpha|^2, and 1/(kappa tau).
    """

    slope: HierarchyRatio
    slow_variation: HierarchyRatio
    cavity_decay: HierarchyRatio

    @property
    def ratios(self) -> tuple:
        return (self.slope, self.slow_variation, self.cavity_decay)

    @property
    def all_pass(self) -> bool:
        return all(r.flag == FLAG_PASS for r in self.ratios)

    @property
    def any_fail(self) -> bool:
        return any(r.flag == FLAG_FAIL for r in self.ratios)


def _flag(value: float) -> str:
    if value > 1.0:
        return FLAG_FAIL
    if value > 0.1:
        return FLAG_WARN
    return FLAG_PASS


def validate_envelope(params: PhysicalParams, envelope: PulseEnvelope,
                      n_ph: Optional[float] = None) -> EnvelopeReport:
    """Pass/warn/fail report on the adiabatic-model preconditions."""
    n_ph = _drive_scale(params, n_ph)
    slope = _slope_bound(params, envelope, n_ph)
    ad = adiabatic_amplitudes(params, envelope, n_ph=n_ph)
    a2 = np.abs(ad.alpha) ** 2
    if math.isinf(slope):
        slow = math.inf
    else:
        da2 = np.gradient(a2, envelope.grid)
        ref = float(np.max(a2)) * params.omega_m
        slow = float(np.max(np.abs(da2))) / ref if ref > 0 else 0.0
    decay = 1.0 / (params.kappa * envelope.tau)
    return EnvelopeReport(
        slope=HierarchyRatio("sup|dE/dt|/(kappa |E|)", slope, _flag(slope)),
        slow_variation=HierarchyRatio("max d|alpha|^2/dt / (omega |alpha|^2)", slow, _flag(slow)),
        cavity_decay=HierarchyRatio("1/(kappa tau)", decay, _flag(decay)),
    )
