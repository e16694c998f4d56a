"""Run configuration: strict YAML/JSON schema with per-scenario required sections."""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

SCENARIOS = ("hom-dip", "step-phase", "linear-phase", "sync-rates", "analyze-tags")

REQUIRED_SECTIONS = {
    "hom-dip": ("source", "memory", "beamsplitter", "windows"),
    "step-phase": ("source", "memory", "beamsplitter", "phase"),
    "linear-phase": ("source", "beamsplitter", "phase", "windows"),
    "sync-rates": ("source", "memory", "windows", "simulation"),
    "analyze-tags": ("input", "windows"),
}

DEFAULT_SEED = 20240611


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSection(_Section):
    start_ns: float = 0.0
    step_ns: float = Field(2.0, gt=0)
    count: int = Field(1000, ge=2)


class SourceSection(_Section):
    center_ns: float = 1000.0
    fwhm_ns: float = Field(320.0, gt=0)
    overlap_sq: float = Field(0.982, ge=0, le=1)
    mode_overlap: float = Field(1.0, ge=0, le=1)
    gbar2: float = Field(0.385, ge=0)
    pairs_per_window: float = Field(24.0, ge=0)
    window_length_us: float = Field(300.0, gt=0)
    repetition_rate_hz: float = Field(50.0, gt=0)
    herald_efficiency: float = Field(0.3, ge=0, le=1)
    as_detection_efficiency: float = Field(0.3, ge=0, le=1)
    two_pair_ratio: float | None = Field(None, ge=0, le=1)
    target_g2: float = Field(0.34, gt=0)
    emission_delay_ns: float = 320.0


class MemorySection(_Section):
    efficiency: float = Field(0.86, ge=0, le=1)
    lifetime_us: float = Field(5.0, ge=0)
    readout_likeness: float = Field(0.985, ge=0, le=1)
    gbar2: float = Field(0.43, ge=0)
    storage_ns: float = Field(700.0, ge=0)
    readout_noise: float | None = Field(None, ge=0, le=1)
    target_g2: float = Field(0.43, gt=0)


class BeamSplitterSection(_Section):
    transmission: float = Field(0.5, ge=0, le=1)
    reflection: float = Field(0.5, ge=0, le=1)

    @model_validator(mode="after")
    def _lossless(self):
        total = self.transmission + self.reflection
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"beamsplitter: transmission + reflection = {total:g}, must equal 1")
        return self


class DelaySweep(_Section):
    start_ns: float = -1500.0
    stop_ns: float = 1500.0
    step_ns: float = Field(150.0, gt=0)


class WindowsSection(_Section):
    coincidence_window_ns: float = Field(640.0, gt=0)
    readout_delay_step_ns: float = Field(150.0, gt=0)
    delays: DelaySweep = DelaySweep()
    binwidth_ns: float = Field(18.0, gt=0)
    span_ns: float = Field(1500.0, gt=0)
    exclusion_margin_ns: float = Field(25.0, ge=0)
    transition_ns: float | None = None


class PhaseSection(_Section):
    kind: Literal["step", "linear"] = "step"
    transition_ns: float = 1000.0
    step_rad: float = 3.141592653589793
    target_same_ratio: float | None = Field(0.30, ge=0)
    ramp_start_ns: float = 730.0
    ramp_span_rad: float = 12.566370614359172
    ramp_duration_ns: float = Field(540.0, gt=0)
    binwidth_ns: float = Field(32.0, gt=0)
    simulated_trials: int = Field(200_000, ge=0)


class SimulationSection(_Section):
    n_windows: int = Field(200_000, ge=1)
    lifetimes_us: list[float] = [1.0, 2.5, 5.0, 10.0]
    g2_windows: int = Field(100_000, ge=0)


class InputSection(_Section):
    tag_file: str
    format: Literal["auto"] = "auto"


class SeedSection(_Section):
    base: int = Field(DEFAULT_SEED, ge=0, lt=2**64)


class OutputSection(_Section):
    dir: str = "results"


class RunConfig(_Section):
    scenario: Literal["hom-dip", "step-phase", "linear-phase", "sync-rates", "analyze-tags"]
    grid: GridSection = GridSection()
    source: SourceSection | None = None
    memory: MemorySection | None = None
    beamsplitter: BeamSplitterSection | None = None
    windows: WindowsSection | None = None
    phase: PhaseSection | None = None
    simulation: SimulationSection | None = None
    input: InputSection | None = None
    seeds: SeedSection = SeedSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _sections_present(self):
        missing = [name for name in REQUIRED_SECTIONS[self.scenario] if getattr(self, name) is None]
        if missing:
            raise ValueError(f"scenario {self.scenario} requires section(s): {', '.join(missing)}")
        return self


def _describe(err: ValidationError) -> tuple[str, str | None]:
    first = err.errors()[0]
    loc = ".".join(str(p) for p in first["loc"])
    msg = first["msg"].removeprefix("Value error, ")
    if first["type"] == "extra_forbidden":
        msg = "unknown key"
    section = str(first["loc"][0]) if first["loc"] else None
    text = f"{loc}: {msg}" if loc else msg
    return text, section


def parse_config(data: dict, scenario: str | None = None, seed: int | None = None) -> RunConfig:
    """Validate a config mapping, applying CLI overrides first."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    data = dict(data)
    if scenario is not None:
        data["scenario"] = scenario
    if seed is not None:
        data["seeds"] = {**(data.get("seeds") or {}), "base": seed}
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        text, section = _describe(exc)
        raise ConfigError(text, section=section) from None


def load_config(path, scenario: str | None = None, seed: int | None = None) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(data or {}, scenario, seed)
