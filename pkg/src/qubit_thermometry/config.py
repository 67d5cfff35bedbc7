"""
Experiment configuration.

A single YAML document, validated by the pydantic models below. Every
physical quantity carries its unit in the key name. ``ExperimentConfig.model_json_schema()``
(or ``qubit-thermometry schema``) prints the full schema.

Example::

    seed: 7
    device: {ej_ghz: 14.07, ec_ghz: 0.24, gap_uev: 170, t1_us: 80}
    ladder: {transitions_ghz: [4.97, 4.70, 4.46]}
    readout: {a0_v: 1.0, sigma_c_target: 0.021}
    sweep: {temperatures_mk: [15, 20, 30, 60], residual_pe: 0.001}
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .measurement import DriftModel, ProtocolConfig, ReadoutModel, sigma_t_for_target
from .qubit_model import DeviceParams, LevelLadder, ladder_from_transitions, transmon_ladder

__all__ = [
    "DeviceSection",
    "LadderSection",
    "ProtocolSection",
    "DriftSection",
    "ReadoutSection",
    "SweepSection",
    "CalibrationSection",
    "QpSection",
    "TraceSection",
    "ExperimentConfig",
    "load_config",
]

T_RANGE_MK = (1.0, 1000.0)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DeviceSection(_Section):
    ej_ghz: float = Field(14.07, gt=0)
    ec_ghz: float = Field(0.24, gt=0)
    gap_uev: float = Field(170.0, gt=0)
    t1_us: float = Field(80.0, gt=0)
    c_ff: Optional[float] = Field(None, gt=0, description="override the capacitance derived from ec_ghz")
    rn_kohm: Optional[float] = Field(None, gt=0, description="override the Ambegaokar-Baratoff resistance")

    def build(self) -> DeviceParams:
        return DeviceParams(
            EJ=self.ej_ghz,
            EC=self.ec_ghz,
            gap=self.gap_uev,
            T1=self.t1_us,
            C_override=self.c_ff,
            RN_override=self.rn_kohm,
        )


class LadderSection(_Section):
    """Measured transitions, or the asymptotic transmon spectrum of the device."""

    transitions_ghz: Optional[list[float]] = Field(default_factory=lambda: [4.97, 4.70, 4.46])
    n_levels: int = Field(4, ge=2)

    def build(self, device: DeviceSection) -> LevelLadder:
        if self.transitions_ghz:
            return ladder_from_transitions(self.transitions_ghz)
        return transmon_ladder(device.ej_ghz, device.ec_ghz, self.n_levels)


class ProtocolSection(_Section):
    rabi_freq_mhz: float = Field(4.5, gt=0)
    rabi_decay_us: float = Field(100.0, gt=0)
    trace_duration_us: float = Field(1.0, gt=0)
    trace_points: int = Field(35, ge=2)
    averages: int = Field(5000, ge=1)
    cycles: int = Field(3000, ge=1)
    repetition_period_us: float = Field(500.0, ge=0)
    ordering: Literal["interleaved", "blocked"] = "interleaved"

    def build(self, t1_us: float, **overrides) -> ProtocolConfig:
        kw = dict(
            rabi_freq=self.rabi_freq_mhz,
            rabi_decay=self.rabi_decay_us,
            trace_duration=self.trace_duration_us,
            trace_points=self.trace_points,
            averages=self.averages,
            cycles=self.cycles,
            repetition_period=self.repetition_period_us,
            T1=t1_us,
            ordering=self.ordering,
        )
        kw.update(overrides)
        return ProtocolConfig(**kw)


class DriftSection(_Section):
    kind: Literal["none", "ou", "linear"] = "none"
    amplitude_v: float = Field(0.0, ge=0)
    correlation_time_s: float = Field(10.0, gt=0)
    slope_v_per_s: float = 0.0

    def build(self) -> DriftModel:
        return DriftModel(
            kind=self.kind,
            amplitude=self.amplitude_v,
            correlation_time=self.correlation_time_s,
            slope=self.slope_v_per_s,
        )


class ReadoutSection(_Section):
    """
    Either ``sigma_t_v`` (per-trial noise, V) or ``sigma_c_target`` (desired
    per-cycle estimator spread, as a fraction, at ``sigma_c_reference_averages``).
    """

    a0_v: float = Field(1.0, gt=0)
    baseline_v: float = 0.0
    sign: Literal[1, -1] = 1
    sigma_t_v: Optional[float] = Field(None, ge=0)
    sigma_c_target: Optional[float] = Field(None, ge=0)
    sigma_c_reference_averages: Optional[int] = Field(None, ge=1)
    drift: DriftSection = Field(default_factory=DriftSection)

    @model_validator(mode="after")
    def _one_noise_spec(self):
        if self.sigma_t_v is not None and self.sigma_c_target is not None:
            raise ValueError("give sigma_t_v or sigma_c_target, not both")
        return self

    def sigma_t(self, default_averages: int) -> float:
        if self.sigma_t_v is not None:
            return self.sigma_t_v
        if self.sigma_c_target is not None:
            ref_a = self.sigma_c_reference_averages or default_averages
            return sigma_t_for_target(self.sigma_c_target, ref_a, self.a0_v)
        return 0.0

    def build(self, default_averages: int, seed: int, sigma_t: float | None = None) -> ReadoutModel:
        return ReadoutModel(
            a0=self.a0_v,
            baseline=self.baseline_v,
            sigma_t=self.sigma_t(default_averages) if sigma_t is None else sigma_t,
            drift=self.drift.build(),
            rng_seed=seed,
            sign=self.sign,
        )


def _check_temperature(t: float) -> float:
    lo, hi = T_RANGE_MK
    if not lo <= t <= hi:
        raise ValueError(f"temperature {t} mK outside [{lo}, {hi}] mK")
    return t


class SweepSection(_Section):
    """
    Temperature set points. ``cycles`` / ``averages`` of null follow the
    per-temperature schedule (A=5000; C=3000 below 35 mK, 1500 below 50 mK,
    750 above).
    """

    temperatures_mk: list[float] = Field(default_factory=lambda: [15, 20, 25, 30, 35, 40, 45, 50, 60])
    residual_pe: float = Field(0.0, ge=0, lt=1, description="non-equilibrium floor on P_e")
    averages: Optional[int] = Field(None, ge=1)
    cycles: Optional[int] = Field(None, ge=2)
    write_samples: bool = True

    @field_validator("temperatures_mk")
    @classmethod
    def _temps(cls, v):
        if not v:
            raise ValueError("at least one temperature is required")
        return [_check_temperature(float(t)) for t in v]


def _default_k_values() -> list[float]:
    return [round(0.002 * i, 6) for i in range(1, 26)]


class CalibrationSection(_Section):
    temperature_mk: float = 15.0
    residual_pe: float = Field(0.00067, ge=0, lt=1)
    k_values: list[float] = Field(default_factory=_default_k_values)
    averages: int = Field(5000, ge=1)
    cycles: int = Field(3000, ge=2)
    sigma_c_target: Optional[float] = Field(None, ge=0, description="noise override for the calibration run")
    fixed_slope: Optional[float] = None

    @field_validator("temperature_mk")
    @classmethod
    def _temp(cls, v):
        return _check_temperature(v)

    @field_validator("k_values")
    @classmethod
    def _ks(cls, v):
        if len(v) < 2:
            raise ValueError("need at least two k values")
        if any(not 0.0 <= k <= 1.0 for k in v):
            raise ValueError("k values must lie in [0, 1]")
        return v


class QpSection(_Section):
    pe: float = Field(0.001, ge=0, lt=1, description="measured (or simulated) excited population")


class TraceSection(_Section):
    temperature_mk: float = 150.0
    residual_pe: float = Field(0.0, ge=0, lt=1)
    averages: Optional[int] = Field(None, ge=1)

    @field_validator("temperature_mk")
    @classmethod
    def _temp(cls, v):
        return _check_temperature(v)


class ExperimentConfig(_Section):
    seed: int = Field(..., description="required; there is no implicit randomness")
    device: DeviceSection = Field(default_factory=DeviceSection)
    ladder: LadderSection = Field(default_factory=LadderSection)
    protocol: ProtocolSection = Field(default_factory=ProtocolSection)
    readout: ReadoutSection = Field(default_factory=ReadoutSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    calibration: CalibrationSection = Field(default_factory=CalibrationSection)
    qp: QpSection = Field(default_factory=QpSection)
    trace: TraceSection = Field(default_factory=TraceSection)
    out_dir: str = "results"
    metadata: dict = Field(default_factory=dict, description="free-form notes, e.g. thermalization wait")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = self.model_dump()
        data.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.model_validate(data)


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read and validate a YAML config; ``overrides`` replace top-level keys."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.model_validate(data)
