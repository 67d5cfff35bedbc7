"""
Population recovery from simulated (or measured) readout data.

Covers the full-trace sinusoid fit, the per-cycle two-point estimator, sample
statistics of the per-cycle estimates, the fixed-bin-width Gaussian histogram
fit, and the linear calibration fit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit, least_squares

from .measurement import CycleRecord, RabiTrace

__all__ = [
    "FitError",
    "SinusoidFit",
    "SampleStats",
    "CalibrationFit",
    "fit_sinusoid",
    "full_trace_pexp",
    "two_point_pe",
    "aggregate",
    "histogram",
    "histogram_gaussian_fit",
    "calibration_fit",
]

Z95 = 1.959963984540054
DEFAULT_BIN_WIDTH = 0.005
GRID_POINTS = 400


class FitError(RuntimeError):
    """A fit failed to converge or its input cannot support the model."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SinusoidFit:
    """``offset + (amplitude/2) cos(2 pi frequency t + phase)``; amplitude is peak-to-peak."""

    amplitude: float
    frequency: float
    phase: float
    offset: float
    residual_rms: float
    amplitude_std: float = math.nan

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.offset + 0.5 * self.amplitude * np.cos(2 * np.pi * self.frequency * t + self.phase)


def _wrap(phase: float) -> float:
    return float(math.remainder(phase, 2 * math.pi))


def _linear_fit(t, y, f):
    """Best (offset, a, b) for offset + a cos + b sin at fixed f; returns (coef, rss)."""
    w = 2 * np.pi * f * t
    X = np.column_stack([np.ones_like(t), np.cos(w), np.sin(w)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return coef, float(r @ r)


def _fixed_shape_fit(t, y, f, phase):
    """Linear fit of offset and peak-to-peak amplitude with frequency and phase held."""
    X = np.column_stack([np.ones_like(t), 0.5 * np.cos(2 * np.pi * f * t + phase)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    dof = len(t) - 2
    s2 = float(r @ r) / dof if dof > 0 else math.nan
    cov = s2 * np.linalg.pinv(X.T @ X)
    return coef, r, math.sqrt(cov[1, 1]) if cov[1, 1] >= 0 else math.nan


def fit_sinusoid(trace: RabiTrace, shared: tuple[float, float] | None = None) -> SinusoidFit:
    """
    Least-squares sinusoid fit to a Rabi trace.

    Parameters
    ----------
    trace : RabiTrace
        At least 8 points, covering at least 1.5 periods of the oscillation.
    shared : (frequency, phase), optional
        Hold frequency (MHz) and phase (rad) fixed, e.g. at the values fitted
        to the reference trace. The fit is then linear in offset and amplitude.

    Returns
    -------
    SinusoidFit

    Raises
    ------
    FitError
        Too few points, too short a span, or a non-converged refinement.
    """
    t, y = trace.times, trace.voltages
    n = len(t)
    if n < 8:
        raise FitError(f"need at least 8 points, got {n}", {"n_points": n})
    span = float(t[-1] - t[0])

    if shared is not None:
        f, phase = shared
        if span * f < 1.5:
            raise FitError("trace spans fewer than 1.5 periods", {"span": span, "frequency": f})
        (offset, amp), r, amp_std = _fixed_shape_fit(t, y, f, phase)
        if amp < 0:
            amp, phase = -amp, _wrap(phase + math.pi)
        return SinusoidFit(
            amplitude=float(amp),
            frequency=float(f),
            phase=_wrap(phase),
            offset=float(offset),
            residual_rms=float(np.sqrt(np.mean(r**2))),
            amplitude_std=float(amp_std),
        )

    # coarse grid between 1.5 periods over the span and the Nyquist limit
    dt = span / (n - 1)
    f_lo, f_hi = 1.5 / span, 0.5 / dt
    grid = np.linspace(f_lo, f_hi, GRID_POINTS)
    rss = [_linear_fit(t, y, f)[1] for f in grid]
    f0 = float(grid[int(np.argmin(rss))])
    (c0, a, b), _ = _linear_fit(t, y, f0)
    amp0 = 2.0 * math.hypot(a, b)
    phi0 = math.atan2(-b, a)

    def resid(p):
        off, amp, f, phi = p
        return off + 0.5 * amp * np.cos(2 * np.pi * f * t + phi) - y

    scale = max(float(np.ptp(y)), 1e-300)
    sol = least_squares(
        resid,
        x0=[c0, amp0, f0, phi0],
        x_scale=[scale, scale, f0, 1.0],
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=2000,
    )
    if sol.status <= 0:
        raise FitError(
            f"sinusoid refinement did not converge: {sol.message}",
            {"status": sol.status, "nfev": sol.nfev, "x": sol.x.tolist(), "start": [c0, amp0, f0, phi0]},
        )
    off, amp, f, phi = sol.x
    if amp < 0:
        amp, phi = -amp, phi + math.pi
    if not f_lo * 0.5 <= f <= f_hi * 1.5:
        raise FitError("fitted frequency left the searchable band", {"frequency": f, "band": (f_lo, f_hi)})
    phi = _wrap(phi)
    *_, amp_std = _fixed_shape_fit(t, y, f, phi)
    return SinusoidFit(
        amplitude=float(amp),
        frequency=float(f),
        phase=phi,
        offset=float(off),
        residual_rms=float(np.sqrt(np.mean(sol.fun**2))),
        amplitude_std=float(amp_std),
    )


def full_trace_pexp(signal: RabiTrace, reference: RabiTrace) -> tuple[float, SinusoidFit, SinusoidFit]:
    """
    Population ratio from a reference/signal trace pair.

    The reference is fitted freely; the signal reuses its frequency and phase.
    Returns ``(A_sig / (A_sig + A_ref), signal_fit, reference_fit)``.
    """
    ref = fit_sinusoid(reference)
    sig = fit_sinusoid(signal, shared=(ref.frequency, ref.phase))
    # signed amplitude: a signal in antiphase with the reference counts negative
    a_sig = sig.amplitude if abs(_wrap(sig.phase - ref.phase)) < math.pi / 2 else -sig.amplitude
    return a_sig / (a_sig + ref.amplitude), sig, ref


def two_point_pe(cycle: CycleRecord, min_denominator: float | None = None) -> float:
    """
    Per-cycle estimate (S2 - S1) / ((S2 - S1) + (R2 - R1)).

    Negative values are returned as-is. A denominator smaller than
    ``min_denominator`` (default: a few ulps of the largest voltage) yields NaN,
    the invalid-sample marker.
    """
    a_sig = cycle.S2 - cycle.S1
    a_ref = cycle.R2 - cycle.R1
    denom = a_sig + a_ref
    if min_denominator is None:
        scale = max(abs(cycle.R1), abs(cycle.R2), abs(cycle.S1), abs(cycle.S2), 1e-300)
        min_denominator = 4 * np.finfo(float).eps * scale
    if abs(denom) <= min_denominator:
        return math.nan
    return a_sig / denom


@dataclass(frozen=True)
class SampleStats:
    """
    Aggregates of the per-cycle estimates.

    ``sigma_c`` uses 1/C normalization unless built with ``ddof=1``.
    ``skewness_defined`` is False when the spread is zero (skewness then 0).
    """

    samples: np.ndarray
    mean: float
    sigma_c: float
    stderr: float
    skewness: float
    skewness_defined: bool
    n_invalid: int
    bin_width: float
    bin_edges: np.ndarray
    counts: np.ndarray
    gaussian_mean: float = math.nan
    gaussian_stdev: float = math.nan
    ddof: int = 0

    @property
    def count(self) -> int:
        return len(self.samples)


def histogram(samples, bin_width: float = DEFAULT_BIN_WIDTH) -> tuple[np.ndarray, np.ndarray]:
    """Histogram with edges on integer multiples of ``bin_width``."""
    x = np.asarray(samples, dtype=float)
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    lo = math.floor(x.min() / bin_width)
    hi = math.floor(x.max() / bin_width) + 1
    edges = np.arange(lo, hi + 1) * bin_width
    counts, _ = np.histogram(x, bins=edges)
    return edges, counts


def _gauss(x, height, mu, sigma):
    return height * np.exp(-0.5 * ((x - mu) / sigma) ** 2)


def histogram_gaussian_fit(samples, bin_width: float = DEFAULT_BIN_WIDTH, *, min_bins: int = 5) -> tuple[float, float]:
    """
    Fit a Gaussian (height, mean, stdev) to the binned samples.

    Returns ``(mean, stdev)``. Needs at least 50 samples and ``min_bins``
    non-empty bins.
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) < 50:
        raise ValueError(f"need at least 50 samples for a histogram fit, got {len(x)}")
    edges, counts = histogram(x, bin_width)
    nonempty = int(np.count_nonzero(counts))
    if nonempty < min_bins:
        raise ValueError(f"only {nonempty} non-empty bins (need {min_bins})")
    centers = 0.5 * (edges[:-1] + edges[1:])
    p0 = [counts.max(), float(x.mean()), max(float(x.std()), bin_width / 2)]
    try:
        with warnings.catch_warnings():
            # only the point estimate is used, not the covariance
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(_gauss, centers, counts.astype(float), p0=p0, maxfev=10000)
    except RuntimeError as err:
        raise FitError(f"Gaussian histogram fit failed: {err}", {"p0": p0}) from err
    return float(popt[1]), float(abs(popt[2]))


def aggregate(samples: Iterable[float], *, ddof: int = 0, bin_width: float = DEFAULT_BIN_WIDTH, gaussian: bool = True) -> SampleStats:
    """
    Sample mean, spread, standard error and skewness of per-cycle estimates.

    NaN entries (invalid cycles) are dropped and counted. The Gaussian
    histogram fit is attempted when ``gaussian`` is set and there are enough
    samples and bins; otherwise its fields stay NaN.
    """
    raw = np.asarray(list(samples), dtype=float)
    valid = raw[np.isfinite(raw)]
    n_invalid = len(raw) - len(valid)
    if len(valid) == 0:
        raise ValueError("all samples are invalid")
    C = len(valid)
    if C < 2:
        raise ValueError("need at least 2 valid samples")
    mean = math.fsum(valid) / C
    dev = valid - mean
    m2 = float(np.mean(dev**2))
    m3 = float(np.mean(dev**3))
    sigma_c = math.sqrt(float(np.sum(dev**2)) / (C - ddof))
    stderr = sigma_c / math.sqrt(C)
    if m2 > 0:
        skew, defined = m3 / m2**1.5, True
    else:
        skew, defined = 0.0, False
    edges, counts = histogram(valid, bin_width)
    g_mean = g_std = math.nan
    if gaussian and C >= 50:
        try:
            g_mean, g_std = histogram_gaussian_fit(valid, bin_width)
        except (ValueError, FitError):
            pass
    return SampleStats(
        samples=valid,
        mean=mean,
        sigma_c=sigma_c,
        stderr=stderr,
        skewness=skew,
        skewness_defined=defined,
        n_invalid=n_invalid,
        bin_width=bin_width,
        bin_edges=edges,
        counts=counts,
        gaussian_mean=g_mean,
        gaussian_stdev=g_std,
        ddof=ddof,
    )


@dataclass(frozen=True)
class CalibrationFit:
    """Line through (k, measured P_e^p). ``ci95`` is the intercept's 95% interval."""

    slope: float
    intercept: float
    ci95: tuple[float, float]
    intercept_stderr: float
    slope_stderr: float = 0.0
    slope_fixed: bool = False
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def __call__(self, k):
        return self.intercept + self.slope * np.asarray(k, dtype=float)


def calibration_fit(points: Sequence[tuple[float, float]], *, fixed_slope: float | None = None) -> CalibrationFit:
    """
    Ordinary least squares of measured population on pump fraction.

    With ``fixed_slope`` (1.0 for a ``y = x + b`` fit) only the intercept is
    estimated. The intercept CI is +/- 1.96 standard errors, the standard error
    coming from the residual variance; with no residual degrees of freedom it
    is infinite.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise ValueError("points must be a sequence of (k, value) pairs")
    k, y = pts[:, 0], pts[:, 1]
    n = len(k)

    if fixed_slope is not None:
        resid0 = y - fixed_slope * k
        b = float(resid0.mean())
        r = resid0 - b
        dof = n - 1
        se_b = math.sqrt(float(r @ r) / dof / n) if dof > 0 else math.inf
        return CalibrationFit(
            slope=float(fixed_slope),
            intercept=b,
            ci95=(b - Z95 * se_b, b + Z95 * se_b),
            intercept_stderr=se_b,
            slope_fixed=True,
            residuals=r,
        )

    X = np.column_stack([np.ones(n), k])
    if len(np.unique(k)) < 2 or np.linalg.matrix_rank(X) < 2:
        raise ValueError("rank-deficient design: need at least two distinct k values")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    b, m = float(coef[0]), float(coef[1])
    r = y - X @ coef
    dof = n - 2
    if dof > 0:
        cov = float(r @ r) / dof * np.linalg.inv(X.T @ X)
        se_b, se_m = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    else:
        se_b = se_m = math.inf
    return CalibrationFit(
        slope=m,
        intercept=b,
        ci95=(b - Z95 * se_b, b + Z95 * se_b),
        intercept_stderr=se_b,
        slope_stderr=se_m,
        residuals=r,
    )
