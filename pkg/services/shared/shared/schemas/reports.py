"""Pydantic schemas for condition reports and run manifests."""

from typing import Any

from pydantic import BaseModel, Field


class ConditionCheck(BaseModel):
    """
    Outcome of one sampled condition check.

    A pass is a certificate on the sampled mesh/probe grid only.
    """

    name: str = Field(..., description="Condition label, e.g. '(k3)'")
    passed: bool = Field(..., description="Whether the sampled condition holds")
    value: float | None = Field(None, description="Measured quantity")
    threshold: float | None = Field(None, description="Bound the quantity is compared with")
    margin: float | None = Field(None, description="threshold - value (positive when passing)")
    detail: str = Field("", description="Human-readable context")


class RunManifest(BaseModel):
    """Echo of a run: resolved config, version, seeds and tolerances actually used."""

    app_name: str = Field(..., description="Producing application")
    version: str = Field(..., description="Library version")
    kind: str = Field(..., description="Experiment kind")
    seed: int = Field(..., description="Root seed")
    threads: int = Field(..., description="Worker threads")
    tolerances: dict[str, float] = Field(default_factory=dict, description="Tolerances used")
    config: dict[str, Any] = Field(..., description="Fully resolved config")
    artifacts: list[str] = Field(default_factory=list, description="Files written by the run")
    summary: dict[str, Any] = Field(default_factory=dict, description="Headline results")
