"""Request and response models shared by the HTTP service and the CLI."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, model_validator


class ModelRef(BaseModel):
    graph: str
    weights: str


class GoldenRequest(ModelRef):
    inputs: list[str] = Field(min_length=1)


class TraceSummary(BaseModel):
    executed_nodes: int
    injectable_instances: dict[str, int]


class GoldenOutput(BaseModel):
    input: str
    outputs: list[Any]
    labels: list[int]
    trace: TraceSummary


class GoldenResponse(BaseModel):
    results: list[GoldenOutput]


class NodeInfo(BaseModel):
    id: str
    op: str
    inputs: list[str]
    injectable: bool
    shape: list[int]


class InspectRequest(ModelRef):
    input: Optional[str] = None


class InspectResponse(BaseModel):
    name: str
    nodes: list[NodeInfo]
    outputs: list[str]
    placeholders: list[str]
    profile: dict[str, int]
    total_instances: int


class ConfigRequest(BaseModel):
    text: str


class ConfigResponse(BaseModel):
    valid: bool
    diagnostics: list[str] = []
    warnings: list[str] = []
    config: Optional[dict] = None


class CampaignRequest(ModelRef):
    config: Optional[str] = None  # path to YAML config
    config_text: Optional[str] = None
    inputs: list[str] = Field(min_length=1)
    n: int = 1
    workers: int = 1
    criterion: Literal["class", "regression"] = "class"
    threshold: Optional[float] = None
    seed: Optional[int] = None
    log: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.n < 1:
            raise ValueError("injections must be ≥ 1")
        if self.workers < 1:
            raise ValueError("workers must be ≥ 1")
        if (self.config is None) == (self.config_text is None):
            raise ValueError("give exactly one of config or config_text")
        if self.criterion == "regression" and (self.threshold is None or self.threshold <= 0):
            raise ValueError("regression criterion needs a positive threshold")
        return self


class CampaignStats(BaseModel):
    seed: int
    mode: str
    fault_type: str
    error_rate: str
    criterion: str
    inputs: int
    runs: int
    total: int
    sdc: int
    crashes: int
    sdc_rate: float
    ci95_half_width: float
    note: Optional[str] = None


class CampaignResponse(BaseModel):
    stats: CampaignStats
    csv: str


class JobStatus(BaseModel):
    id: str
    state: Literal["queued", "running", "done", "failed"]
    result: Optional[CampaignResponse] = None
    error: Optional[str] = None


class BenchRequest(ModelRef):
    input: str
    predictions: int = Field(50, ge=1)
    repeats: int = Field(5, ge=1)
    seed: int = 0


class BenchResponse(BaseModel):
    baseline_s: float
    disable_fi_s: float
    enable_fi_s: float
    inst_overhead: float
    fi_overhead: float
    predictions: int
    executions: dict[str, int]
    table: str
