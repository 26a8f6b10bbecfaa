"""FastAPI application exposing the scenario runners.

Each run endpoint accepts a full ScenarioSpec and synchronously computes the
result table.  Invalid configurations map to 422, numerical failures to 500.
All computation is deterministic in the submitted spec.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..scenarios import (
    ConfigError,
    NumericalError,
    RunResult,
    run_ber,
    run_cd_sweep,
    run_dgd_sweep,
    run_scurve,
    run_selftest,
    run_track,
    spec_sha256,
)
from .models import (
    CheckResult,
    HealthResponse,
    RunRequest,
    RunResponse,
    SelftestRequest,
    SelftestResponse,
)


def _json_safe(v):
    """JSON cannot carry inf/nan; encode them as strings the CSV layer can
    still render deterministically."""
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _to_response(result: RunResult) -> RunResponse:
    return RunResponse(
        subcommand=result.subcommand,
        spec=result.spec,
        spec_sha256=spec_sha256(result.spec),
        columns=result.columns,
        rows=[[_json_safe(v) for v in row] for row in result.rows],
        summary={k: _json_safe(v) for k, v in result.summary.items()},
    )


def create_app() -> FastAPI:
    app = FastAPI(
        title="cyclosync service",
        version=__version__,
        description=(
            "Timing-recovery and CD/PMD-estimation experiments for simulated "
            "optical coherent receivers.  POST a scenario spec, receive the "
            "result table."
        ),
    )

    def _run(runner, req: RunRequest) -> RunResponse:
        try:
            return _to_response(runner(req.spec))
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except (NumericalError, FloatingPointError) as exc:
            raise HTTPException(status_code=500, detail=f"numerical failure: {exc}") from exc

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/run/scurve", response_model=RunResponse)
    def scurve(req: RunRequest) -> RunResponse:
        return _run(run_scurve, req)

    @app.post("/run/cd-sweep", response_model=RunResponse)
    def cd_sweep(req: RunRequest) -> RunResponse:
        return _run(run_cd_sweep, req)

    @app.post("/run/dgd-sweep", response_model=RunResponse)
    def dgd_sweep(req: RunRequest) -> RunResponse:
        return _run(run_dgd_sweep, req)

    @app.post("/run/track", response_model=RunResponse)
    def track_run(req: RunRequest) -> RunResponse:
        return _run(run_track, req)

    @app.post("/run/ber", response_model=RunResponse)
    def ber(req: RunRequest) -> RunResponse:
        return _run(run_ber, req)

    @app.post("/selftest", response_model=SelftestResponse)
    def selftest(req: SelftestRequest) -> SelftestResponse:
        result = run_selftest(seed=req.seed)
        return SelftestResponse(
            passed=bool(result.summary["passed"]),
            checks=[
                CheckResult(check=row[0], passed=bool(row[1]), detail=row[2])
                for row in result.rows
            ],
        )

    return app


app = create_app()
