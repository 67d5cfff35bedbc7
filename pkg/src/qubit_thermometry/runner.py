"""Experiment orchestration: temperature sweep, calibration, quasiparticle report, single trace."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .config import ExperimentConfig
from .estimator import CalibrationFit, aggregate, calibration_fit, full_trace_pexp, two_point_pe
from .measurement import acquire_trace, pump_fraction, relax, run_experiment, sigma_t_for_target
from .qubit_model import (
    TRUNCATION_WARN_POP,
    LevelLadder,
    PopulationDistribution,
    boltzmann_populations,
    effective_temperature,
    pexp_from_populations,
    predicted_pexp,
)
from .quasiparticle import gamma_qp, qp_from_pe, t1_qp

__all__ = [
    "SWEEP_COLUMNS",
    "SWEEP_UNITS",
    "CALIBRATION_COLUMNS",
    "SweepResult",
    "CalibrationResult",
    "schedule_for",
    "floored_populations",
    "job_rng",
    "run_temperature_sweep",
    "run_calibration",
    "run_qp_analysis",
    "run_trace",
    "write_sweep",
    "write_calibration",
    "render_summary",
    "write_qp_report",
    "write_trace",
]

log = logging.getLogger(__name__)

SWEEP_COLUMNS = (
    "bath_mk", "t_eff_mk", "A", "C", "N", "sigma_c", "pe", "dpe", "gamma1", "gauss_stdev", "gauss_mean",
    "t_eff_lo_mk", "t_eff_hi_mk", "pe_true", "pexp_true", "pe_theory", "pexp_theory", "n_invalid",
)
SWEEP_UNITS = (
    "mK", "mK", "count", "count", "count", "fraction", "fraction", "fraction", "1", "fraction", "fraction",
    "mK", "mK", "fraction", "fraction", "fraction", "fraction", "count",
)
CALIBRATION_COLUMNS = ("k", "pe_pumped_true", "pe_measured", "dpe", "fit", "residual_contamination")


def schedule_for(T: float) -> tuple[int, int]:
    """Default (A, C) per bath temperature, after the reported acquisition schedule."""
    if T < 35:
        return 5000, 3000
    if T < 50:
        return 5000, 1500
    return 5000, 750


def floored_populations(ladder: LevelLadder, T: float, residual_pe: float = 0.0) -> PopulationDistribution:
    """
    Boltzmann populations with P_e raised to ``residual_pe`` if it is higher.

    The excess is taken out of the ground state; levels above e keep their
    thermal values.
    """
    pop = boltzmann_populations(ladder, T, warn=False)
    if pop.probs[-1] > TRUNCATION_WARN_POP:
        log.warning("top level of the %d-level ladder holds %.2e at %g mK", len(ladder), pop.probs[-1], T)
    if residual_pe <= pop.pe:
        return pop
    p = list(pop.probs)
    p[0] -= residual_pe - p[1]
    p[1] = residual_pe
    if p[0] < 0:
        raise ValueError(f"residual P_e {residual_pe} is not compatible with the thermal populations")
    return PopulationDistribution.normalized(p)


def job_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for job ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _map(fn: Callable, jobs: Sequence, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, jobs))


def _safe_teff(ladder: LevelLadder, pe: float) -> float:
    try:
        return effective_temperature(ladder, pe)
    except ValueError:
        return math.nan


@dataclass
class SweepResult:
    rows: list[dict[str, Any]]
    samples: dict[float, np.ndarray]


def _sweep_job(args) -> tuple[dict[str, Any], np.ndarray]:
    cfg, index, T = args
    device = cfg.device
    ladder = cfg.ladder.build(device)
    A_sched, C_sched = schedule_for(T)
    A = cfg.sweep.averages or A_sched
    C = cfg.sweep.cycles or C_sched
    protocol = cfg.protocol.build(device.t1_us, averages=A, cycles=C)
    readout = cfg.readout.build(cfg.protocol.averages, cfg.seed)
    pop = floored_populations(ladder, T, cfg.sweep.residual_pe)

    cycles = run_experiment(pop, protocol, readout, rng=job_rng(cfg.seed, index))
    min_denom = 1e-6 * readout.a0
    samples = [two_point_pe(cyc, min_denominator=min_denom) for cyc in cycles]
    stats = aggregate(samples)
    if stats.n_invalid:
        log.warning("%g mK: %d of %d cycles had a vanishing denominator and were dropped", T, stats.n_invalid, C)

    mean, dpe = stats.mean, stats.stderr
    row = {
        "bath_mk": T,
        "t_eff_mk": _safe_teff(ladder, mean),
        "A": A,
        "C": stats.count,
        "N": stats.count * A,
        "sigma_c": stats.sigma_c,
        "pe": mean,
        "dpe": dpe,
        "gamma1": stats.skewness,
        "gauss_stdev": stats.gaussian_stdev,
        "gauss_mean": stats.gaussian_mean,
        "t_eff_lo_mk": _safe_teff(ladder, mean - dpe),
        "t_eff_hi_mk": _safe_teff(ladder, mean + dpe),
        "pe_true": pop.pe,
        "pexp_true": pexp_from_populations(pop),
        "pe_theory": boltzmann_populations(ladder, T, warn=False).pe,
        "pexp_theory": predicted_pexp(ladder, T),
        "n_invalid": stats.n_invalid,
    }
    return row, stats.samples


def run_temperature_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """
    Simulate and analyse every set point of ``cfg.sweep``.

    Each set point is an independent job with its own RNG stream derived from
    ``(cfg.seed, position in the temperature list)``; results are sorted by
    temperature, so the output does not depend on ``jobs``.
    """
    tasks = [(cfg, i, T) for i, T in enumerate(cfg.sweep.temperatures_mk)]
    results = _map(_sweep_job, tasks, jobs)
    results.sort(key=lambda r: r[0]["bath_mk"])
    return SweepResult(rows=[r for r, _ in results], samples={r["bath_mk"]: s for r, s in results})


@dataclass
class CalibrationResult:
    fit: CalibrationFit
    rows: list[dict[str, Any]]
    bath: PopulationDistribution


def _calibration_job(args) -> dict[str, Any]:
    cfg, index, k = args
    cal = cfg.calibration
    ladder = cfg.ladder.build(cfg.device)
    protocol = cfg.protocol.build(cfg.device.t1_us, averages=cal.averages, cycles=cal.cycles)
    sigma_t = None
    if cal.sigma_c_target is not None:
        sigma_t = sigma_t_for_target(cal.sigma_c_target, cal.averages, cfg.readout.a0_v)
    readout = cfg.readout.build(cfg.protocol.averages, cfg.seed, sigma_t=sigma_t)
    bath = floored_populations(ladder, cal.temperature_mk, cal.residual_pe)
    pumped = pump_fraction(bath, k)
    cycles = run_experiment(pumped, protocol, readout, rng=job_rng(cfg.seed, index))
    stats = aggregate([two_point_pe(c, min_denominator=1e-6 * readout.a0) for c in cycles], gaussian=False)
    contamination = relax(pumped, protocol.repetition_period, protocol.T1).pe
    return {
        "k": k,
        "pe_pumped_true": pumped.pe,
        "pe_measured": stats.mean,
        "dpe": stats.stderr,
        "residual_contamination": contamination,
    }


def run_calibration(cfg: ExperimentConfig, jobs: int = 1) -> CalibrationResult:
    """Pump-then-measure over ``cfg.calibration.k_values`` and fit the line."""
    cal = cfg.calibration
    tasks = [(cfg, i, k) for i, k in enumerate(cal.k_values)]
    rows = _map(_calibration_job, tasks, jobs)
    rows.sort(key=lambda r: r["k"])
    fit = calibration_fit([(r["k"], r["pe_measured"]) for r in rows], fixed_slope=cal.fixed_slope)
    for r in rows:
        r["fit"] = float(fit(r["k"]))
    bath = floored_populations(cfg.ladder.build(cfg.device), cal.temperature_mk, cal.residual_pe)
    return CalibrationResult(fit=fit, rows=rows, bath=bath)


def _round_sig(x: float, digits: int = 2) -> float:
    if x == 0 or not math.isfinite(x):
        return x
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


def run_qp_analysis(cfg: ExperimentConfig, pe: float | None = None) -> dict[str, Any]:
    """
    Treat ``pe`` (default ``cfg.qp.pe``) as entirely quasiparticle-induced.

    Reports the density ratio, the induced rate and T1 for both the exact and
    the 2-significant-figure density, and their ratio to the measured T1.
    """
    pe = cfg.qp.pe if pe is None else pe
    device = cfg.device.build()
    ege = cfg.ladder.build(cfg.device).f_ge
    density = qp_from_pe(pe, device.gap, ege)
    rounded = _round_sig(density)
    gamma = gamma_qp(device, ege, density)
    gamma_r = gamma_qp(device, ege, rounded)
    t1 = t1_qp(gamma)
    return {
        "pe": pe,
        "ege_ghz": ege,
        "gap_uev": device.gap,
        "rn_kohm": device.RN,
        "c_ff": device.C,
        "density_ratio": density,
        "gamma_qp_khz": gamma,
        "t1_qp_us": t1,
        "density_ratio_rounded": rounded,
        "gamma_qp_khz_rounded": gamma_r,
        "t1_qp_us_rounded": t1_qp(gamma_r),
        "t1_measured_us": device.T1,
        "t1_qp_over_measured": t1 / device.T1,
        "t1_qp_unbounded": math.isinf(t1),
    }


def run_trace(cfg: ExperimentConfig, seed_index: int = 0) -> dict[str, Any]:
    """Reference and signal full traces at ``cfg.trace.temperature_mk`` plus their fits."""
    ladder = cfg.ladder.build(cfg.device)
    tr = cfg.trace
    averages = tr.averages or cfg.protocol.averages
    protocol = cfg.protocol.build(cfg.device.t1_us, averages=averages)
    readout = cfg.readout.build(cfg.protocol.averages, cfg.seed)
    pop = floored_populations(ladder, tr.temperature_mk, tr.residual_pe)
    rng = job_rng(cfg.seed, seed_index)
    ref = acquire_trace(pop, True, protocol, readout, rng)
    sig = acquire_trace(pop, False, protocol, readout, rng)
    ratio, sig_fit, ref_fit = full_trace_pexp(sig, ref)
    return {
        "temperature_mk": tr.temperature_mk,
        "populations": pop.probs,
        "reference": ref,
        "signal": sig,
        "reference_fit": ref_fit,
        "signal_fit": sig_fit,
        "pexp": ratio,
        "pexp_true": pexp_from_populations(pop),
    }


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict], units: Sequence[str] | None = None):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if units is not None:
            fh.write("# units: " + ",".join(units) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _temp_label(T: float) -> str:
    return f"{T:g}".replace(".", "p")


def write_sweep(result: SweepResult, out_dir: str | Path, write_samples: bool = True) -> list[Path]:
    """Write ``sweep.csv``, ``summary.txt`` and per-temperature ``samples_<T>mK.csv``."""
    out = Path(out_dir)
    paths = [out / "sweep.csv", out / "summary.txt"]
    _write_csv(paths[0], SWEEP_COLUMNS, result.rows, SWEEP_UNITS)
    paths[1].write_text(render_summary(result.rows))
    if write_samples:
        for T, samples in result.samples.items():
            p = out / f"samples_{_temp_label(T)}mK.csv"
            _write_csv(p, ("cycle", "pe_sample"), [{"cycle": i, "pe_sample": s} for i, s in enumerate(samples)])
            paths.append(p)
    return paths


def write_calibration(result: CalibrationResult, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "calibration.csv"
    fit = result.fit
    _write_csv(path, CALIBRATION_COLUMNS, result.rows)
    with open(path, "a") as fh:
        fh.write(
            f"# fit: slope={fit.slope!r} intercept={fit.intercept!r} "
            f"ci95_low={fit.ci95[0]!r} ci95_high={fit.ci95[1]!r} slope_fixed={str(fit.slope_fixed).lower()}\n"
        )
    return path


def _pct(x: float, digits: int = 3) -> str:
    return "nan" if not math.isfinite(x) else f"{100 * x:.{digits}f}%"


def render_summary(rows: Sequence[dict]) -> str:
    """Plain-text table in the layout of the published sample-statistics table."""
    header = (
        f"{'Bath':>6} {'T_eff':>22} {'A':>8} {'C':>8} {'N':>10} {'sigma_C':>9} "
        f"{'P_e':>9} {'dP_e':>8} {'gamma1':>8} | {'stdev':>8} {'mean':>8}"
    )
    lines = [
        f"{'Temperature (mK)':<30}{'Sample statistics':^58}| {'Gaussian fit':^17}",
        header,
        "-" * len(header),
    ]
    for r in rows:
        lo = r["t_eff_mk"] - r["t_eff_lo_mk"]
        hi = r["t_eff_hi_mk"] - r["t_eff_mk"]
        teff = f"{r['t_eff_mk']:.1f} +/- ({lo:.1f},{hi:.1f})"
        lines.append(
            f"{r['bath_mk']:>6g} {teff:>22} {r['A']:>8.1e} {r['C']:>8.1e} {r['N']:>10.2e} "
            f"{_pct(r['sigma_c'], 2):>9} {_pct(r['pe']):>9} {_pct(r['dpe']):>8} {r['gamma1']:>8.3f} | "
            f"{_pct(r['gauss_stdev'], 2):>8} {_pct(r['gauss_mean']):>8}"
        )
    return "\n".join(lines) + "\n"


def write_qp_report(report: dict, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "qp_report.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True, default=_fmt) + "\n")
    return path


def write_trace(result: dict, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "trace.csv"
    ref, sig = result["reference"], result["signal"]
    rows = [
        {
            "time_us": t,
            "reference_v": vr,
            "signal_v": vs,
            "reference_fit_v": float(result["reference_fit"](t)),
            "signal_fit_v": float(result["signal_fit"](t)),
        }
        for t, vr, vs in zip(ref.times, ref.voltages, sig.voltages)
    ]
    _write_csv(path, ("time_us", "reference_v", "signal_v", "reference_fit_v", "signal_fit_v"), rows)
    return path
