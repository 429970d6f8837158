"""HTTP wrapper around the simulator core.

Thin, stateless routes: validation lives in the schemas, physics in the
core modules. Every frequency crossing this boundary is plain Hz.
"""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, HTTPException

from . import __version__
from .amplitudes import PulseEnvelope, adiabatic_amplitudes, solve_amplitudes, validate_envelope
from .ideal import coherent_fidelity, epr_variance_ideal, ideal_output_state, squeezing_threshold
from .metrics import epr_variance, log_negativity, teleport_fidelity
from .optimizer import OptimizationResult, optimize, sweep, sweep_rows
from .params import to_dimensionless
from .dynamics import pulsed_output_state
from .schemas import (
    AppendixValidateRequest,
    AppendixValidateResponse,
    DynamicsRequest,
    DynamicsResponse,
    FlagOut,
    IdealRequest,
    IdealResponse,
    OperatingPointOut,
    OptimizeRequest,
    OptimizeResponse,
    SweepRequest,
    SweepResponse,
    SweepRow,
    Table1Response,
    Table1Row,
)

TWO_PI = 2.0 * math.pi

app = FastAPI(title="pulsed EPR entanglement service", version=__version__)


# published operating points used by the table1 comparison preset
REFERENCE_ROWS = (
    dict(label="row1", omega_m_hz=3.8e6, q_factor=1e5, n_bar=1100.0, n0=0.0,
         g0_hz=4.8, kappa_hz=3.2e6, tau_s=2.5e-6, g_hz=0.97e6, delta_epr=0.7),
    dict(label="row2", omega_m_hz=3.7e9, q_factor=1e5, n_bar=0.7, n0=0.7,
         g0_hz=9.1e5, kappa_hz=0.26e9, tau_s=0.41e-6, g_hz=0.032e9, delta_epr=0.1),
    dict(label="row3", omega_m_hz=3.7e9, q_factor=1e5, n_bar=3.7, n0=3.7,
         g0_hz=9.1e5, kappa_hz=0.31e9, tau_s=0.30e-6, g_hz=0.040e9, delta_epr=0.5),
)


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/ideal", response_model=IdealResponse)
def ideal(req: IdealRequest) -> IdealResponse:
    delta = epr_variance_ideal(req.r, req.n0) + (2.0 * req.n_bar + 1.0) * req.epsilon
    state = ideal_output_state(req.r, req.n0, req.n_bar, req.epsilon)
    return IdealResponse(
        delta_epr=delta,
        log_negativity=log_negativity(state),
        fidelity=coherent_fidelity(delta),
        threshold_r=squeezing_threshold(req.n0),
        entangled=delta < 2.0,
    )


@app.post("/dynamics", response_model=DynamicsResponse)
def dynamics(req: DynamicsRequest) -> DynamicsResponse:
    sign = -1.0
    if req.params.physical is not None:
        sign = req.params.physical.detuning_over_omega
        if abs(abs(sign) - 1.0) > 1e-12:
            raise HTTPException(
                status_code=422,
                detail="pulsed dynamics runs at Delta = +-omega_m; "
                f"got detuning_over_omega = {sign}",
            )
        dp = to_dimensionless(req.params.physical.to_params())
    else:
        dp = req.params.dimensionless.to_params()
    try:
        res = pulsed_output_state(
            dp, detuning_sign=math.copysign(1.0, sign),
            rate_search=req.rate_search, tol=req.tol, engine=req.engine,
        )
    except (ValueError, RuntimeError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    m, l = res.io.mech, res.io.light

    def cdict(rel):
        return {
            "c1": abs(rel.c1), "c2": abs(rel.c2), "c3": abs(rel.c3),
            "c4": abs(rel.c4), "c5": float(rel.c5), "c6": float(rel.c6),
        }

    return DynamicsResponse(
        covariance=[[float(v) for v in row] for row in res.state.cov],
        delta_epr=float(res.delta_epr),
        log_negativity=float(log_negativity(res.state)),
        fidelity=float(teleport_fidelity(res.state)),
        mech_coefficients=cdict(m),
        light_coefficients=cdict(l),
        commutator_defects=[abs(x) for x in res.io.commutator_defects()],
        grid_points=res.grid_points,
        refinements=res.refinements,
        rate_factor=float(res.rate_factor),
    )


def _result_to_response(res: OptimizationResult) -> OptimizeResponse:
    derived = None
    if res.derived is not None:
        d = res.derived
        derived = OperatingPointOut(
            kappa_hz=d.kappa / TWO_PI,
            tau_s=d.tau,
            g_hz=d.g / TWO_PI,
            n_ph=d.n_ph,
            power_w=d.power,
        )
    return OptimizeResponse(
        eps_opt=res.eps_opt,
        eta_opt=res.eta_opt,
        xi_opt=res.xi_opt,
        delta_epr_min=res.delta_epr_min,
        thermal_share=res.thermal_share,
        eps_prime=res.eps_prime,
        derived=derived,
        iterations=res.iterations,
        restarts=res.restarts,
        converged=res.converged,
        certificate_margin=res.certificate_margin,
        grid_evals=res.grid_evals,
    )


@app.post("/optimize", response_model=OptimizeResponse)
def optimize_route(req: OptimizeRequest) -> OptimizeResponse:
    try:
        res = optimize(
            req.n_bar, req.n0, req.q_factor,
            points_per_decade=req.points_per_decade,
            omega_m=TWO_PI * req.omega_m_hz if req.omega_m_hz else None,
            g0=TWO_PI * req.g0_hz if req.g0_hz else None,
            lambda_l=req.lambda_nm * 1e-9 if req.lambda_nm else None,
        )
    except (ValueError, RuntimeError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return _result_to_response(res)


@app.post("/sweep", response_model=SweepResponse)
def sweep_route(req: SweepRequest) -> SweepResponse:
    try:
        points = sweep(
            sorted(req.n_bar_list), req.n0, req.q_factor,
            points_per_decade=req.points_per_decade,
            omega_m=TWO_PI * req.omega_m_hz if req.omega_m_hz else None,
            g0=TWO_PI * req.g0_hz if req.g0_hz else None,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    rows = [SweepRow(**row) for row in sweep_rows(points)]
    failures = {str(p.n_bar): p.error for p in points if p.error}
    return SweepResponse(rows=rows, failures=failures)


@app.post("/appendix-validate", response_model=AppendixValidateResponse)
def appendix_validate(req: AppendixValidateRequest) -> AppendixValidateResponse:
    params = req.physical.to_params()
    env = PulseEnvelope.raised_cosine(params.tau, req.ramp_fraction, panels=req.panels)
    try:
        sol = solve_amplitudes(params, env, n_ph=req.n_ph, locked=req.locked)
        adia = adiabatic_amplitudes(params, env, n_ph=req.n_ph, locked=req.locked)
    except (ValueError, RuntimeError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    rep = validate_envelope(params, env)
    mask = sol.plateau_mask
    dev = float(np.max(np.abs(sol.alpha[mask] - adia.alpha[mask]) / np.abs(adia.alpha[mask])))
    return AppendixValidateResponse(
        flags=[FlagOut(name=h.name, value=float(h.value), flag=h.flag) for h in rep.ratios],
        all_pass=rep.all_pass,
        delta_bound=float(sol.delta_bound),
        plateau_deviation=dev,
        bound_satisfied=bool(dev <= sol.delta_bound),
        delta0_over_omega=float(sol.delta0 / params.omega_m),
        plateau_alpha=float(sol.min_plateau_alpha()),
        plateau_coupling_hz=float(sol.plateau_coupling(params.g0) / TWO_PI),
        n_ph=float(sol.n_ph),
        trajectory={
            "t": [float(v) for v in sol.grid],
            "alpha_re": [float(v) for v in sol.alpha.real],
            "alpha_im": [float(v) for v in sol.alpha.imag],
            "beta_re": [float(v) for v in sol.beta.real],
            "beta_im": [float(v) for v in sol.beta.imag],
            "delta_eff": [float(v) for v in sol.delta_eff],
        },
    )


@app.post("/table1", response_model=Table1Response)
def table1() -> Table1Response:
    rows = []
    for ref in REFERENCE_ROWS:
        res = optimize(
            ref["n_bar"], ref["n0"], ref["q_factor"],
            omega_m=TWO_PI * ref["omega_m_hz"], g0=TWO_PI * ref["g0_hz"],
        )
        d = res.derived
        computed = dict(
            delta_epr=res.delta_epr_min,
            kappa_hz=d.kappa / TWO_PI,
            tau_s=d.tau,
            g_hz=d.g / TWO_PI,
            thermal_share=res.thermal_share,
        )
        published = {k: v for k, v in ref.items() if k != "label"}
        rows.append(Table1Row(label=ref["label"], published=published, computed=computed))
    return Table1Response(rows=rows)
