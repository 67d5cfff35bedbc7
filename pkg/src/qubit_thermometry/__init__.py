"""Simulation and analysis of e-f Rabi excited-state population measurements on a transmon."""

from .estimator import (
    CalibrationFit,
    FitError,
    SampleStats,
    SinusoidFit,
    aggregate,
    calibration_fit,
    fit_sinusoid,
    full_trace_pexp,
    histogram_gaussian_fit,
    two_point_pe,
)
from .measurement import (
    CycleRecord,
    DriftModel,
    ProtocolConfig,
    RabiTrace,
    ReadoutModel,
    acquire_cycle,
    acquire_trace,
    ef_rabi_voltage,
    pump_fraction,
    relax,
    run_experiment,
)
from .quasiparticle import QpState, gamma_qp, pe_from_qp, qp_from_pe, t1_qp
from .qubit_model import (
    DeviceParams,
    LevelLadder,
    PopulationDistribution,
    boltzmann_populations,
    capacitance_from_charging_energy,
    effective_temperature,
    ladder_from_transitions,
    normal_resistance,
    predicted_pexp,
    transmon_ladder,
)

__version__ = "0.1.0"
