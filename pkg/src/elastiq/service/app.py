"""HTTP service wrapping the simulator and experiment harness.

Endpoints mirror the CLI subcommands: trace generation, single-policy
runs, and multi-policy comparisons. Domain validation failures map to
400 with the underlying message; schema failures surface as FastAPI's
usual 422.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..controller import QTableLoadError
from ..harness import compare, run_experiment, records_to_csv
from ..workload import TraceFormatError, format_trace_csv, gen_diurnal, gen_irregular, parse_trace_csv
from .schemas import (
    CompareRequest,
    CompareResponse,
    HealthResponse,
    RunRequest,
    RunResponse,
    RunSummary,
    TraceGenRequest,
    TraceResponse,
)

app = FastAPI(
    title="elastiq",
    description="QoS-aware cluster scaling simulator and experiment runner",
    version=__version__,
)


def _bad_request(exc: ValueError) -> HTTPException:
    return HTTPException(status_code=400, detail=str(exc))


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/traces/generate", response_model=TraceResponse)
def generate_trace(req: TraceGenRequest) -> TraceResponse:
    spec = req.spec
    seed = spec.seed if spec.seed is not None else req.seed
    try:
        if spec.kind == "irregular":
            trace = gen_irregular(
                seed,
                spec.duration_s,
                spec.interval_s,
                spec.u_min,
                spec.u_max,
                spec.jump_prob,
                spec.jump_scale,
                spec.step_frac,
            )
        else:
            trace = gen_diurnal(
                seed,
                spec.duration_s,
                spec.interval_s,
                spec.u_peak,
                spec.u_trough,
                spec.peak_hour,
                spec.noise_frac,
            )
    except ValueError as exc:
        raise _bad_request(exc) from exc
    return TraceResponse(csv=format_trace_csv(trace), n_samples=len(trace), interval_s=trace.interval_s)


def _parse_optional_trace(trace_csv: str | None):
    if trace_csv is None:
        return None
    try:
        return parse_trace_csv(trace_csv, source="request.trace_csv")
    except TraceFormatError as exc:
        raise _bad_request(exc) from exc


@app.post("/experiments/run", response_model=RunResponse)
def run_endpoint(req: RunRequest) -> RunResponse:
    trace = _parse_optional_trace(req.trace_csv)
    try:
        records, summary, policy = run_experiment(
            req.config, req.policy, seed=req.seed, trace=trace, qtables_doc=req.qtables
        )
    except (ValueError, QTableLoadError) as exc:
        raise _bad_request(exc) from exc
    qtables = policy.to_doc() if hasattr(policy, "to_doc") else None
    return RunResponse(
        records_csv=records_to_csv(records),
        summary=RunSummary(**summary),
        qtables=qtables,
    )


@app.post("/experiments/compare", response_model=CompareResponse)
def compare_endpoint(req: CompareRequest) -> CompareResponse:
    trace = _parse_optional_trace(req.trace_csv)
    try:
        result = compare(req.config, req.policies, seed=req.seed, trace=trace)
    except ValueError as exc:
        raise _bad_request(exc) from exc
    return CompareResponse(summary=result["summary"], records_csv=result["records_csv"])
