"""
Synthetic e-f Rabi readout.

Populations are pushed through the pulse sequence (pi / fractional pumps,
e-f drive, relaxation) and converted into averaged readout voltages with
white noise and a slow drift. Only populations are tracked; coherences never
enter the readout.

Times: drive durations in us, drift clock in s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Literal

import numpy as np

from .qubit_model import PopulationDistribution

__all__ = [
    "ProtocolConfig",
    "DriftModel",
    "ReadoutModel",
    "RabiTrace",
    "CycleRecord",
    "DriftClock",
    "pump_fraction",
    "relax",
    "ef_rabi_voltage",
    "two_point_times",
    "acquire_trace",
    "acquire_cycle",
    "run_experiment",
    "sigma_t_for_target",
]

POINT_ORDER = ("R1", "R2", "S1", "S2")


@dataclass(frozen=True)
class ProtocolConfig:
    """
    Drive and averaging settings.

    Attributes
    ----------
    rabi_freq : float
        e-f Rabi frequency, MHz.
    rabi_decay : float
        Envelope decay time T_R, us.
    trace_duration : float
        Length of a full Rabi trace, us.
    trace_points : int
        Number of drive durations in a full trace.
    averages : int
        Trials averaged into each point (A).
    cycles : int
        Number of R1-R2-S1-S2 cycles (C).
    repetition_period : float
        Wait between trials, us.
    T1 : float
        e -> g relaxation time, us.
    ordering : {"interleaved", "blocked"}
        ``interleaved`` takes R1-R2-S1-S2 inside each cycle; ``blocked``
        takes every R1, then every R2, S1 and S2 across all cycles.
    """

    rabi_freq: float = 4.5
    rabi_decay: float = 100.0
    trace_duration: float = 1.0
    trace_points: int = 35
    averages: int = 5000
    cycles: int = 3000
    repetition_period: float = 500.0
    T1: float = 80.0
    ordering: Literal["interleaved", "blocked"] = "interleaved"

    def __post_init__(self):
        if self.averages < 1 or self.cycles < 1:
            raise ValueError("averages and cycles must be >= 1")
        if self.rabi_freq <= 0 or self.rabi_decay <= 0 or self.T1 <= 0:
            raise ValueError("rabi_freq, rabi_decay and T1 must be positive")
        if self.repetition_period < 0:
            raise ValueError("repetition_period must be non-negative")
        if self.ordering not in ("interleaved", "blocked"):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    @property
    def point_duration_s(self) -> float:
        """Wall-clock time to acquire one averaged point."""
        return self.averages * self.repetition_period * 1e-6

    @property
    def cycle_duration_s(self) -> float:
        return 4 * self.point_duration_s


@dataclass(frozen=True)
class DriftModel:
    """
    Slow additive readout drift.

    ``ou`` is an Ornstein-Uhlenbeck process with stationary std ``amplitude``
    (V) and ``correlation_time`` (s). ``linear`` adds ``slope`` V/s.
    """

    kind: Literal["none", "ou", "linear"] = "none"
    amplitude: float = 0.0
    correlation_time: float = 10.0
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "ou", "linear"):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.amplitude < 0 or self.correlation_time <= 0:
            raise ValueError("drift amplitude must be >= 0 and correlation time > 0")


@dataclass(frozen=True)
class ReadoutModel:
    """
    Population-to-voltage conversion plus noise.

    ``sign=+1`` means the |e> readout peak is bright (voltage rises with the
    e population); ``-1`` inverts it.
    """

    a0: float = 1.0
    baseline: float = 0.0
    sigma_t: float = 0.0
    drift: DriftModel = field(default_factory=DriftModel)
    rng_seed: int = 0
    sign: int = 1

    def __post_init__(self):
        if self.a0 <= 0:
            raise ValueError("a0 must be positive")
        if self.sigma_t < 0:
            raise ValueError("sigma_t must be non-negative")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")


@dataclass(frozen=True)
class RabiTrace:
    times: np.ndarray
    voltages: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.voltages, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and voltages must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "voltages", v)


@dataclass(frozen=True)
class CycleRecord:
    R1: float
    R2: float
    S1: float
    S2: float
    cycle_index: int = 0

    @property
    def a_sig(self) -> float:
        return self.S2 - self.S1

    @property
    def a_ref(self) -> float:
        return self.R2 - self.R1


class DriftClock:
    """Wall-clock time (s) and current drift value; advanced point by point."""

    def __init__(self, model: DriftModel | None = None, t0: float = 0.0):
        self.model = model or DriftModel()
        self.t = t0
        self.value = self.model.slope * t0 if self.model.kind == "linear" else 0.0

    def advance(self, dt: float, rng: np.random.Generator) -> float:
        """Move forward by ``dt`` seconds and return the drift at the new time."""
        self.t += dt
        kind = self.model.kind
        if kind == "linear":
            self.value = self.model.slope * self.t
        elif kind == "ou":
            rho = math.exp(-dt / self.model.correlation_time)
            kick = rng.standard_normal()
            self.value = rho * self.value + self.model.amplitude * math.sqrt(1.0 - rho * rho) * kick
        return self.value


def pump_fraction(pop: PopulationDistribution, k: float) -> PopulationDistribution:
    """
    Fractional g<->e rotation as a population exchange.

    A fraction ``k`` of P_g moves to e and the same fraction of P_e moves to g;
    k=1 is the full pi pulse that swaps them.
    """
    if not 0.0 <= k <= 1.0:
        raise ValueError("k must lie in [0, 1]")
    p = list(pop.probs)
    pg, pe = p[0], p[1]
    p[0] = k * pe + (1.0 - k) * pg
    p[1] = k * pg + (1.0 - k) * pe
    return PopulationDistribution.normalized(p)


def relax(pop: PopulationDistribution, wait: float, T1: float) -> PopulationDistribution:
    """
    Single-exponential e -> g decay over ``wait`` us.

    Levels above e are folded into e first.
    """
    if wait < 0 or T1 <= 0:
        raise ValueError("wait must be >= 0 and T1 > 0")
    if wait == 0:
        return pop
    excited = math.fsum(pop.probs[1:]) * math.exp(-wait / T1)
    out = [0.0] * len(pop)
    out[0], out[1] = 1.0 - excited, excited
    return PopulationDistribution.normalized(out)


def ef_rabi_voltage(pop, t, config: ProtocolConfig, readout: ReadoutModel):
    """
    Noiseless readout voltage after an e-f drive of duration ``t`` (us).

    The drive rotates population between e and f with frequency
    ``config.rabi_freq`` and an exponential envelope ``config.rabi_decay``;
    the noiseless peak-to-peak swing is a0 * (P_e - P_f).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("drive duration must be non-negative")
    p_hi, p_lo = pop.pe, pop.pf
    osc = np.cos(2 * np.pi * config.rabi_freq * t) * np.exp(-t / config.rabi_decay)
    pe_t = p_lo + (p_hi - p_lo) * (1.0 + osc) / 2.0
    v = readout.baseline + readout.sign * readout.a0 * pe_t
    return float(v) if v.ndim == 0 else v


def two_point_times(config: ProtocolConfig, readout: ReadoutModel) -> tuple[float, float]:
    """
    Drive durations (us) for points 1 and 2 of each two-point pair.

    Point 1 is the low-voltage extremum and point 2 the high one, so
    point2 - point1 is positive for either readout sign.
    """
    half = 0.5 / config.rabi_freq
    return (half, 0.0) if readout.sign > 0 else (0.0, half)


def acquire_trace(
    pop: PopulationDistribution,
    with_swap: bool,
    config: ProtocolConfig,
    readout: ReadoutModel,
    rng: np.random.Generator,
    drift_clock: DriftClock | None = None,
) -> RabiTrace:
    """Full e-f Rabi trace; each point is the mean of ``config.averages`` trials."""
    if config.trace_points < 2:
        raise ValueError("trace_points must be >= 2")
    if config.trace_duration * config.rabi_freq < 4:
        raise ValueError("a full trace must cover at least 4 Rabi periods")
    clock = drift_clock or DriftClock(readout.drift)
    drive_pop = pump_fraction(pop, 1.0) if with_swap else pop
    times = np.linspace(0.0, config.trace_duration, config.trace_points)
    clean = ef_rabi_voltage(drive_pop, times, config, readout)
    point_sigma = readout.sigma_t / math.sqrt(config.averages)
    volts = np.empty_like(clean)
    for i, v in enumerate(clean):
        drift = clock.advance(config.point_duration_s, rng)
        volts[i] = v + drift + point_sigma * rng.standard_normal()
    meta = {"with_swap": with_swap, "config": asdict(config), "populations": drive_pop.probs}
    return RabiTrace(times, volts, meta)


def _clean_points(pop, config, readout) -> dict[str, float]:
    t1, t2 = two_point_times(config, readout)
    ref_pop = pump_fraction(pop, 1.0)
    return {
        "R1": ef_rabi_voltage(ref_pop, t1, config, readout),
        "R2": ef_rabi_voltage(ref_pop, t2, config, readout),
        "S1": ef_rabi_voltage(pop, t1, config, readout),
        "S2": ef_rabi_voltage(pop, t2, config, readout),
    }


def _noisy(clean: float, clock: DriftClock, config, readout, rng) -> float:
    drift = clock.advance(config.point_duration_s, rng)
    return clean + drift + readout.sigma_t / math.sqrt(config.averages) * rng.standard_normal()


def acquire_cycle(
    pop: PopulationDistribution,
    config: ProtocolConfig,
    readout: ReadoutModel,
    rng: np.random.Generator,
    drift_clock: DriftClock,
    cycle_index: int = 0,
    _clean: dict[str, float] | None = None,
) -> CycleRecord:
    """One R1-R2-S1-S2 cycle; the drift clock advances by one point time per point."""
    clean = _clean or _clean_points(pop, config, readout)
    values = {name: _noisy(clean[name], drift_clock, config, readout, rng) for name in POINT_ORDER}
    return CycleRecord(cycle_index=cycle_index, **values)


def run_experiment(
    true_pop: PopulationDistribution,
    config: ProtocolConfig,
    readout: ReadoutModel,
    rng: np.random.Generator | None = None,
) -> list[CycleRecord]:
    """
    Acquire ``config.cycles`` cycles from one deterministic RNG stream.

    Without an explicit ``rng`` the stream is seeded from ``readout.rng_seed``.
    """
    if rng is None:
        rng = np.random.default_rng(readout.rng_seed)
    clock = DriftClock(readout.drift)
    clean = _clean_points(true_pop, config, readout)
    if config.ordering == "interleaved":
        return [
            acquire_cycle(true_pop, config, readout, rng, clock, i, _clean=clean)
            for i in range(config.cycles)
        ]
    columns = {
        name: [_noisy(clean[name], clock, config, readout, rng) for _ in range(config.cycles)]
        for name in POINT_ORDER
    }
    return [
        CycleRecord(*(columns[name][i] for name in POINT_ORDER), cycle_index=i)
        for i in range(config.cycles)
    ]


def sigma_t_for_target(sigma_c: float, averages: int, a0: float = 1.0) -> float:
    """
    Per-trial voltage noise giving a per-cycle estimator spread ``sigma_c``.

    For small P_e the estimator is ~ (S2 - S1) / a0, a difference of two
    independent points each with std sigma_t / sqrt(A), hence the sqrt(2).
    """
    return sigma_c * a0 * math.sqrt(averages) / math.sqrt(2.0)
