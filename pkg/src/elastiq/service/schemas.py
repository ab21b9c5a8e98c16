"""Request/response models for the HTTP service.

Traces travel as CSV strings (the same format the trace files use) and
Q-tables as their JSON documents, so the service itself never touches the
filesystem; clients own all file I/O.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..config import ExperimentConfig, TraceSpec


class HealthResponse(BaseModel):
    status: str
    version: str


class TraceGenRequest(BaseModel):
    spec: TraceSpec
    seed: int = 0


class TraceResponse(BaseModel):
    csv: str
    n_samples: int
    interval_s: float


class RunRequest(BaseModel):
    config: ExperimentConfig = Field(default_factory=ExperimentConfig)
    policy: str
    seed: int | None = None
    trace_csv: str | None = None
    qtables: dict | None = None


class RunSummary(BaseModel):
    policy: str
    seed: int
    config_hash: str
    trace: dict
    intervals: int
    violations: int
    violation_rate_pct: float
    mean_power_w: float


class RunResponse(BaseModel):
    records_csv: str
    summary: RunSummary
    qtables: dict | None = None


class CompareRequest(BaseModel):
    config: ExperimentConfig = Field(default_factory=ExperimentConfig)
    policies: list[str] = Field(min_length=2)
    seed: int | None = None
    trace_csv: str | None = None


class CompareResponse(BaseModel):
    summary: dict
    records_csv: dict[str, str]
