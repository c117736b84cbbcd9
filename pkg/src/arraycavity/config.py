"""Experiment configuration documents (YAML or JSON), validated strictly."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StarkConfig(_Strict):
    alpha: float = Field(ge=0)
    w_stark: float = Field(gt=0)


class GeometryConfig(_Strict):
    a: float = Field(0.47, gt=0)
    N: int = Field(ge=1)
    L: float = Field(1.5, gt=0)
    w0: Optional[float] = Field(None, gt=0)
    flat: bool = False
    stark: Optional[StarkConfig] = None
    single_mirror: bool = False

    @model_validator(mode="after")
    def _curvature(self):
        if self.flat and self.w0 is not None:
            raise ValueError("flat mirrors take no w0")
        if not self.flat and self.w0 is None:
            self.flat = True
        return self


class RamanSettings(_Strict):
    Omega: Optional[float] = None
    Delta1: Optional[float] = None
    Delta2: Optional[float] = None


class TargetConfig(_Strict):
    position: list[float] = Field(min_length=3, max_length=3)
    gamma_a: float = Field(1.0, gt=0)
    detuning: Optional[float] = None
    raman: Optional[RamanSettings] = None


class TrapConfig(_Strict):
    V0_over_Er: float = Field(gt=0)


class MotionConfig(_Strict):
    regime: Literal["frozen", "fast"] = "fast"
    sigma: Optional[Union[float, list[float]]] = None
    trap: Optional[TrapConfig] = None
    n_realizations: int = Field(200, ge=2)
    seed: int = Field(0, ge=0)
    axes: str = "xyz"
    include_targets: bool = False

    @field_validator("axes")
    @classmethod
    def _axes(cls, v):
        if not v or any(c not in "xyz" for c in v) or len(set(v)) != len(v):
            raise ValueError("axes must be a non-empty subset of 'xyz'")
        return v


class SweepConfig(_Strict):
    variable: Literal["w0", "a", "L", "N", "alpha", "sigma"]
    values: list[float] = Field(min_length=1)


class GridConfig(_Strict):
    start: float
    stop: float
    num: int = Field(201, ge=2)
    relative_to_cavity: bool = False


class BeamConfig(_Strict):
    w0: float = Field(gt=0)


class DynamicsConfig(_Strict):
    protocol: Literal["single", "exchange"] = "exchange"
    delta_factor: float = Field(500.0, gt=0)
    t_max_factor: float = Field(2.0, gt=0)
    n_t: int = Field(2001, ge=10)


class OutputConfig(_Strict):
    directory: str = "out"


class ExperimentConfig(_Strict):
    geometry: Optional[GeometryConfig] = None
    targets: list[TargetConfig] = Field(default_factory=list)
    motion: Optional[MotionConfig] = None
    sweep: Optional[SweepConfig] = None
    grid: Optional[GridConfig] = None
    beam: Optional[BeamConfig] = None
    dynamics: Optional[DynamicsConfig] = None
    output: OutputConfig = Field(default_factory=OutputConfig)


def load_config(path) -> ExperimentConfig:
    """Parse a YAML or JSON file into an :class:`ExperimentConfig`."""
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        data = yaml.safe_load(text)
    if data is None:
        data = {}
    return ExperimentConfig.model_validate(data)
