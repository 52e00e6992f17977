"""HTTP facade over the experiment runners.

Endpoints accept an ExperimentConfig as the JSON body and return the CSV
produced by the corresponding runner.  Validation failures surface as 400
or 422 responses; numerical failures inside a run surface as 500 with a
`numerical:` detail prefix so clients can distinguish them.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from .errors import ConfigError, FpdiffError, NumericalError
from .experiments import (
    ExperimentConfig,
    run_accuracy,
    run_bilevel,
    run_timing,
    selftest,
)

app = FastAPI(
    title="fpdiff",
    version=__version__,
    description=(
        "Derivatives of fixed points of parametric iterative solvers: "
        "accuracy, timing and bilevel experiments as CSV."
    ),
)


class RunResponse(BaseModel):
    csv: str
    row_count: int


class SelftestResponse(BaseModel):
    passed: bool
    report: str


class HealthResponse(BaseModel):
    status: str
    version: str


def _run(runner, config: ExperimentConfig) -> RunResponse:
    try:
        text = runner(config)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except NumericalError as exc:
        raise HTTPException(status_code=500, detail=f"numerical: {exc}") from exc
    except FpdiffError as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc
    return RunResponse(csv=text, row_count=max(text.count("\n") - 1, 0))


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/run/accuracy", response_model=RunResponse)
def accuracy(config: ExperimentConfig) -> RunResponse:
    return _run(run_accuracy, config)


@app.post("/run/timing", response_model=RunResponse)
def timing(config: ExperimentConfig) -> RunResponse:
    return _run(run_timing, config)


@app.post("/run/bilevel", response_model=RunResponse)
def bilevel(config: ExperimentConfig) -> RunResponse:
    return _run(run_bilevel, config)


@app.post("/selftest", response_model=SelftestResponse)
def run_selftest() -> SelftestResponse:
    passed, report = selftest()
    return SelftestResponse(passed=passed, report=report)
