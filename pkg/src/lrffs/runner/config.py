"""Declarative experiment configuration (JSON files validated with pydantic)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core import DataError
from ..methods import MethodSpec, parse_method
from ..simgen import PRESETS, Attack, ScenarioSpec, preset


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScenarioConfig(_Strict):
    """A named preset plus overrides; unset fields keep the preset's value."""

    preset: str
    R: Optional[int] = None
    p: Optional[int] = None
    m: Optional[int] = None
    n: Optional[Union[int, list[int]]] = None
    heterogeneity: Optional[float] = None
    outliers: Optional[int] = None
    outlier_low: Optional[float] = None
    outlier_high: Optional[float] = None
    attack: Optional[Literal["none", "label_shuffle", "category_misalign"]] = None
    attack_fraction: Optional[float] = None
    shift: Optional[float] = None  # example1 only
    N: Optional[int] = None  # example1 only

    @field_validator("preset")
    @classmethod
    def _known(cls, v):
        if v not in PRESETS:
            raise ValueError(f"unknown preset {v!r}; expected one of {PRESETS}")
        return v

    def build(self, **extra) -> ScenarioSpec:
        fields = self.model_dump(exclude_none=True, exclude={"preset", "attack", "attack_fraction"})
        fraction = extra.pop("attack_fraction", None)
        fields.update(extra)
        if isinstance(fields.get("n"), list):
            fields["n"] = tuple(fields["n"])
        default = preset(self.preset).attack
        if fraction is None:
            fraction = default.fraction if self.attack_fraction is None else self.attack_fraction
        fields["attack"] = Attack(self.attack or default.kind, fraction)
        return preset(self.preset, **fields)


class CsvConfig(_Strict):
    paths: list[str] = Field(min_length=1)
    label_column: str
    delimiter: str = ","
    labels: Optional[list[str]] = None
    relevant: Optional[list[int]] = None


class MethodConfig(_Strict):
    name: str
    weighting: str = "half_floor"
    d: int = 1
    k: int = 1
    preset: str = "argmax"

    def spec(self) -> MethodSpec:
        return MethodSpec(self.name, self.weighting, self.d, self.k, self.preset)


class SelectionConfig(_Strict):
    kind: Literal["fixed_delta", "top_k", "aux_perm", "fdr"] = "aux_perm"
    delta: Optional[float] = None
    K: Optional[int] = None
    q: int = 1000
    alpha: float = 0.1

    @model_validator(mode="after")
    def _params(self):
        if self.kind == "fixed_delta" and (self.delta is None or self.delta < 0):
            raise ValueError("fixed_delta needs a non-negative delta")
        if self.kind == "top_k" and (self.K is None or self.K < 1):
            raise ValueError("top_k needs K >= 1")
        if self.kind == "aux_perm" and self.q < 1:
            raise ValueError("aux_perm needs q >= 1")
        if self.kind == "fdr" and not 0 < self.alpha < 1:
            raise ValueError("fdr needs 0 < alpha < 1")
        return self


class SweepConfig(_Strict):
    param: Literal["heterogeneity", "attack_fraction", "R", "m", "outliers"]
    values: list[float] = Field(min_length=1)


class TransportConfig(_Strict):
    kind: Literal["in_process", "socket"] = "in_process"
    address: str = "auto"  # host:port of a running server, or "auto" for an embedded one


class ExperimentConfig(_Strict):
    name: str = "experiment"
    scenario: Optional[ScenarioConfig] = None
    csv: Optional[CsvConfig] = None
    methods: list[Union[str, MethodConfig]] = Field(default_factory=lambda: ["lrffs"], min_length=1)
    selection: SelectionConfig = Field(default_factory=SelectionConfig)
    T: int = Field(200, ge=0)
    master_seed: int = Field(0, ge=0)
    sweep: Optional[SweepConfig] = None
    transport: TransportConfig = Field(default_factory=TransportConfig)
    engine: Literal["sorted", "pairwise"] = "sorted"
    output_dir: str = "results"

    @model_validator(mode="after")
    def _check(self):
        if (self.scenario is None) == (self.csv is None):
            raise ValueError("give exactly one of 'scenario' or 'csv'")
        if self.csv is not None and self.sweep is not None:
            raise ValueError("sweeps apply to synthetic scenarios only")
        labels = [s.label for s in self.method_specs()]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate methods: {labels}")
        if self.scenario is not None:
            for value in (self.sweep.values if self.sweep else [None]):
                self.build_scenario(value)
        return self

    def method_specs(self) -> list[MethodSpec]:
        out = []
        for m in self.methods:
            try:
                out.append(parse_method(m) if isinstance(m, str) else m.spec())
            except DataError as exc:
                raise ValueError(str(exc)) from None
        return out

    def build_scenario(self, sweep_value=None) -> ScenarioSpec:
        extra = {}
        if self.sweep is not None and sweep_value is not None:
            v = sweep_value
            extra[self.sweep.param] = int(v) if self.sweep.param in ("R", "m", "outliers") else float(v)
        try:
            return self.scenario.build(**extra)
        except DataError as exc:
            raise ValueError(str(exc)) from None


class ConfigError(DataError):
    pass


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config; every problem is reported as ConfigError."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(raw, str(path))


def parse_config(raw, source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"]) or "(root)"
            lines.append(f"  {loc}: {err['msg']}")
        raise ConfigError(f"{source}: invalid config\n" + "\n".join(lines)) from None
