"""Request/response models for the HTTP service and the CLI config file.

Frequencies in configs are plain Hz (the numbers experiments quote), not
angular; the conversion to rad/s happens once at ingestion. Unknown keys
are rejected everywhere so a typo in a config cannot silently change a run.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

TWO_PI = 2.0 * math.pi


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PhysicalBlock(StrictModel):
    """Lab-frame parameters, frequencies in Hz (non-angular)."""

    omega_m_hz: float = Field(gt=0, description="mechanical frequency in Hz")
    kappa_hz: float = Field(gt=0, description="cavity amplitude decay rate in Hz")
    q_factor: float = Field(gt=1, description="mechanical quality factor omega_m/gamma")
    g0_hz: float = Field(ge=0, description="single-photon coupling in Hz")
    g_hz: float = Field(gt=0, description="pump-enhanced coupling in Hz")
    tau_s: float = Field(gt=0, description="pulse duration in seconds")
    n_bar: float = Field(ge=0, description="bath occupation")
    n0: float = Field(ge=0, description="mechanical occupation at pulse start")
    detuning_over_omega: float = Field(default=-1.0, description="Delta/omega_m, -1 is the entangler")
    lambda_nm: Optional[float] = Field(default=None, gt=0, description="drive wavelength for power reporting")

    def to_params(self):
        from .params import PhysicalParams

        w = TWO_PI * self.omega_m_hz
        return PhysicalParams(
            omega_m=w,
            kappa=TWO_PI * self.kappa_hz,
            gamma=w / self.q_factor,
            g0=TWO_PI * self.g0_hz,
            g=TWO_PI * self.g_hz,
            detuning=self.detuning_over_omega * w,
            tau=self.tau_s,
            n_bar=self.n_bar,
            n0=self.n0,
            lambda_l=self.lambda_nm * 1e-9 if self.lambda_nm else None,
        )


class DimensionlessBlock(StrictModel):
    eta: float = Field(gt=0, description="kappa/omega_m")
    xi: float = Field(gt=0, description="g/kappa")
    epsilon: float = Field(gt=0, description="gamma*tau")
    n_bar: float = Field(ge=0)
    n0: float = Field(ge=0)
    q_factor: float = Field(gt=1)

    def to_params(self):
        from .params import DimensionlessParams

        return DimensionlessParams(
            eta=self.eta, xi=self.xi, epsilon=self.epsilon,
            n_bar=self.n_bar, n0=self.n0, Q=self.q_factor,
        )


class ParamsIn(StrictModel):
    """Exactly one of the two parameter blocks."""

    physical: Optional[PhysicalBlock] = None
    dimensionless: Optional[DimensionlessBlock] = None

    @model_validator(mode="after")
    def one_block(self):
        if (self.physical is None) == (self.dimensionless is None):
            raise ValueError("provide exactly one of 'physical' or 'dimensionless'")
        return self


class IdealRequest(StrictModel):
    r: float = Field(ge=0, description="squeezing parameter G*tau")
    n0: float = Field(default=0.0, ge=0)
    n_bar: float = Field(default=0.0, ge=0)
    epsilon: float = Field(default=0.0, ge=0, description="thermal decoherence gamma*tau")


class IdealResponse(BaseModel):
    delta_epr: float
    log_negativity: float
    fidelity: float
    threshold_r: float
    entangled: bool


class DynamicsRequest(StrictModel):
    params: ParamsIn
    rate_search: bool = False
    tol: float = Field(default=1e-6, gt=0)
    engine: str = "auto"


class DynamicsResponse(BaseModel):
    covariance: List[List[float]]
    delta_epr: float
    log_negativity: float
    fidelity: float
    mech_coefficients: Dict[str, float]
    light_coefficients: Dict[str, float]
    commutator_defects: List[float]
    grid_points: int
    refinements: int
    rate_factor: float


class OptimizeRequest(StrictModel):
    n_bar: float = Field(ge=0)
    n0: float = Field(default=0.0, ge=0)
    q_factor: float = Field(gt=1)
    omega_m_hz: Optional[float] = Field(default=None, gt=0)
    g0_hz: Optional[float] = Field(default=None, gt=0)
    lambda_nm: Optional[float] = Field(default=None, gt=0)
    points_per_decade: int = Field(default=8, ge=2, le=32)


class OperatingPointOut(BaseModel):
    kappa_hz: float
    tau_s: float
    g_hz: float
    n_ph: Optional[float] = None
    power_w: Optional[float] = None


class OptimizeResponse(BaseModel):
    eps_opt: float
    eta_opt: float
    xi_opt: float
    delta_epr_min: float
    thermal_share: float
    eps_prime: float
    derived: Optional[OperatingPointOut] = None
    iterations: int
    restarts: int
    converged: bool
    certificate_margin: float
    grid_evals: int


class SweepRequest(StrictModel):
    n_bar_list: List[float] = Field(min_length=1)
    n0: float = Field(default=0.0, ge=0)
    q_factor: float = Field(gt=1)
    omega_m_hz: Optional[float] = Field(default=None, gt=0)
    g0_hz: Optional[float] = Field(default=None, gt=0)
    points_per_decade: int = Field(default=8, ge=2, le=32)


class SweepRow(BaseModel):
    n_bar: float
    delta_epr_min: float
    eps_opt: float
    eta_opt: float
    xi_opt: float
    thermal_share: float
    eps_prime: float


class SweepResponse(BaseModel):
    rows: List[SweepRow]
    failures: Dict[str, str] = {}


class AppendixValidateRequest(StrictModel):
    physical: PhysicalBlock
    ramp_fraction: float = Field(default=0.1, gt=0, lt=0.5)
    panels: int = Field(default=4096, ge=256, le=65536)
    n_ph: Optional[float] = Field(default=None, ge=0)
    locked: bool = True


class FlagOut(BaseModel):
    name: str
    value: float
    flag: str


class AppendixValidateResponse(BaseModel):
    flags: List[FlagOut]
    all_pass: bool
    delta_bound: float
    plateau_deviation: float
    bound_satisfied: bool
    delta0_over_omega: float
    plateau_alpha: float
    plateau_coupling_hz: float
    n_ph: float
    trajectory: Dict[str, List[float]]


class Table1Row(BaseModel):
    label: str
    published: Dict[str, float]
    computed: Dict[str, float]


class Table1Response(BaseModel):
    rows: List[Table1Row]
