"""Request/response models for the scenario service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, ConfigDict

from ..scenarios import ScenarioSpec


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    spec: ScenarioSpec


class RunResponse(BaseModel):
    subcommand: str
    spec: ScenarioSpec
    spec_sha256: str
    columns: list[str]
    rows: list[list[Any]]
    summary: dict[str, Any]


class SelftestRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    seed: int = 7


class CheckResult(BaseModel):
    check: str
    passed: bool
    detail: str


class SelftestResponse(BaseModel):
    passed: bool
    checks: list[CheckResult]


class HealthResponse(BaseModel):
    status: str
    version: str
