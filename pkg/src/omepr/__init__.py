"""Pulsed optomechanical EPR entanglement: simulator, optimizer and service."""

__version__ = "0.1.0"

from .params import (
    PhysicalParams,
    DimensionlessParams,
    effective_coupling,
    photons_for_coupling,
    occupation_from_temperature,
    validate_hierarchy,
)
from .state import GaussianState
from .ideal import (
    TwoModeSqueezeMap,
    SwapMap,
    epr_variance_ideal,
    squeezing_threshold,
    entangle_map,
    swap_map,
    teleport_added_noise,
    coherent_fidelity,
)
from .metrics import EntanglementReport, epr_variance, log_negativity, teleport_fidelity
from .dynamics import (
    build_drift,
    propagate,
    pulsed_output_state,
    covariance_ode_oracle,
    cw_steady_state,
    cw_negativity_scan,
)
from .amplitudes import (
    PulseEnvelope,
    AmplitudeSolution,
    solve_amplitudes,
    adiabatic_amplitudes,
    validate_envelope,
)
from .optimizer import OptimizationResult, objective, optimize, sweep, figure2_sweeps

__all__ = [
    "PhysicalParams",
    "DimensionlessParams",
    "effective_coupling",
    "photons_for_coupling",
    "occupation_from_temperature",
    "validate_hierarchy",
    "GaussianState",
    "TwoModeSqueezeMap",
    "SwapMap",
    "epr_variance_ideal",
    "squeezing_threshold",
    "entangle_map",
    "swap_map",
    "teleport_added_noise",
    "coherent_fidelity",
    "EntanglementReport",
    "epr_variance",
    "log_negativity",
    "teleport_fidelity",
    "build_drift",
    "propagate",
    "pulsed_output_state",
    "covariance_ode_oracle",
    "cw_steady_state",
    "cw_negativity_scan",
    "PulseEnvelope",
    "AmplitudeSolution",
    "solve_amplitudes",
    "adiabatic_amplitudes",
    "validate_envelope",
    "OptimizationResult",
    "objective",
    "optimize",
    "sweep",
    "figure2_sweeps",
]
