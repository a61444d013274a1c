"""HTTP service wrapping the simulator: one endpoint per run recipe.

The service is stateless; every request carries its own configuration
document, so identical requests return identical payloads.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import runner
from ..config import ConfigError, RunConfig, validate_config
from ..protocol import ProtocolError
from ..units import UnitError
from .models import (
    CalibrateRequest,
    FilePayload,
    McRequest,
    RunResponse,
    SimulateRequest,
    SweepRequest,
    Table1Request,
)

app = FastAPI(
    title="romram",
    description="Transient simulator for the ROM-augmented 8T SRAM bit-cell",
)


@app.exception_handler(ConfigError)
@app.exception_handler(ProtocolError)
@app.exception_handler(UnitError)
async def _bad_config(request: Request, exc: Exception) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


def _validated(req) -> RunConfig:
    return validate_config(req.config, req.overrides)


def _response(result: runner.RunResult) -> RunResponse:
    return RunResponse(
        status=result.status,
        files=[FilePayload(name=n, content=c) for n, c in result.files.items()],
        info=result.info,
    )


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.get("/schema")
def schema() -> dict:
    """JSON schema of the run-configuration document."""
    return RunConfig.model_json_schema()


@app.post("/simulate", response_model=RunResponse)
def simulate(req: SimulateRequest) -> RunResponse:
    config = _validated(req)
    return _response(
        runner.run_simulate(
            config, req.case, req.mode, vsl=req.vsl, duration=req.duration, phase=req.phase
        )
    )


@app.post("/mc", response_model=RunResponse)
def mc(req: McRequest) -> RunResponse:
    config = _validated(req)
    return _response(runner.run_mc(config, req.mode, calibrate_first=req.calibrate_first))


@app.post("/calibrate", response_model=RunResponse)
def calibrate(req: CalibrateRequest) -> RunResponse:
    config = _validated(req)
    return _response(runner.run_calibrate(config, req.mode))


@app.post("/table1", response_model=RunResponse)
def table1(req: Table1Request) -> RunResponse:
    config = _validated(req)
    return _response(runner.run_table1(config, modes=req.modes))


@app.post("/sweep", response_model=RunResponse)
def sweep(req: SweepRequest) -> RunResponse:
    document = dict(req.config)
    if req.overrides:
        from ..config import apply_override

        for path, value in req.overrides.items():
            apply_override(document, path, value)
    validate_config(document)  # fail fast with a readable message
    if req.parameter not in runner.SWEEP_PARAMETERS:
        raise HTTPException(
            status_code=400,
            detail=f"sweep parameter must be one of {runner.SWEEP_PARAMETERS}",
        )
    return _response(runner.run_sweep(document, req.parameter, req.values, req.mode))
