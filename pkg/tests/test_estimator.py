import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import stats as sps

from qubit_thermometry.estimator import (
    FitError,
    aggregate,
    calibration_fit,
    fit_sinusoid,
    full_trace_pexp,
    histogram,
    histogram_gaussian_fit,
    two_point_pe,
)
from qubit_thermometry.measurement import (
    CycleRecord,
    ProtocolConfig,
    RabiTrace,
    ReadoutModel,
    acquire_trace,
    ef_rabi_voltage,
    run_experiment,
    sigma_t_for_target,
)
from qubit_thermometry.qubit_model import PopulationDistribution, boltzmann_populations, ladder_from_transitions

LADDER = ladder_from_transitions([4.97, 4.70, 4.46])
POP_150 = boltzmann_populations(LADDER, 150, warn=False)
# (Pe - Pf) / (Pe + Pg - 2 Pf) at 150 mK, mpmath oracle
PEXP_150 = 0.142440040965


def _trace(amp, f, phase, offset, n=35, duration=1.0):
    t = np.linspace(0, duration, n)
    return RabiTrace(t, offset + 0.5 * amp * np.cos(2 * np.pi * f * t + phase))


class TestFitSinusoid:
    @pytest.mark.parametrize(
        "amp,f,phase,offset",
        [(0.7576, 4.5, 0.0, 0.2), (1.3, 3.1, 1.0, -0.5), (0.02, 6.2, -2.5, 1.0)],
    )
    def test_exact_model_recovery(self, amp, f, phase, offset):
        fit = fit_sinusoid(_trace(amp, f, phase, offset))
        assert fit.amplitude == pytest.approx(amp, rel=1e-9)
        assert fit.frequency == pytest.approx(f, rel=1e-9)
        assert math.remainder(fit.phase - phase, 2 * math.pi) == pytest.approx(0, abs=1e-9)
        assert fit.offset == pytest.approx(offset, rel=1e-9)
        assert fit.residual_rms < 1e-9 * amp

    def test_simulated_noiseless_trace(self):
        cfg = ProtocolConfig(rabi_decay=1e15)
        tr = acquire_trace(POP_150, True, cfg, ReadoutModel(), np.random.default_rng(0))
        fit = fit_sinusoid(tr)
        assert fit.amplitude == pytest.approx(POP_150.pg - POP_150.pf, rel=1e-9)
        assert fit.frequency == pytest.approx(4.5, rel=1e-9)

    def test_zero_amplitude_with_shared_shape(self):
        rng = np.random.default_rng(1)
        hits = 0
        for _ in range(50):
            t = np.linspace(0, 1, 35)
            tr = RabiTrace(t, 0.3 + 0.01 * rng.standard_normal(35))
            fit = fit_sinusoid(tr, shared=(4.5, 0.0))
            hits += fit.amplitude <= 3 * fit.amplitude_std
        assert hits >= 48

    def test_joint_fit_150mk(self):
        cfg = ProtocolConfig(averages=1000)
        readout = ReadoutModel(sigma_t=0.3)
        rng = np.random.default_rng(4)
        ratios, stds = [], []
        for _ in range(20):
            ref = acquire_trace(POP_150, True, cfg, readout, rng)
            sig = acquire_trace(POP_150, False, cfg, readout, rng)
            ratio, sig_fit, ref_fit = full_trace_pexp(sig, ref)
            ratios.append(ratio)
            stds.append(sig_fit.amplitude_std / (sig_fit.amplitude + ref_fit.amplitude))
        # independent per-trace noise: each ratio within 4 sigma, the mean within 3 sigma/sqrt(n)
        assert all(abs(r - PEXP_150) < 4 * s for r, s in zip(ratios, stds))
        assert abs(np.mean(ratios) - PEXP_150) < 3 * np.mean(stds) / math.sqrt(len(ratios))

    def test_shared_fit_keeps_parameters(self):
        fit = fit_sinusoid(_trace(0.4, 4.5, 0.3, 0.0), shared=(4.5, 0.3))
        assert (fit.frequency, fit.phase) == (4.5, pytest.approx(0.3))
        assert fit.amplitude == pytest.approx(0.4, rel=1e-12)

    def test_too_few_points(self):
        with pytest.raises(FitError) as err:
            fit_sinusoid(_trace(1, 4.5, 0, 0, n=7))
        assert err.value.diagnostics["n_points"] == 7

    def test_too_short_span(self):
        with pytest.raises(FitError):
            fit_sinusoid(_trace(1, 1.0, 0, 0, duration=1.0), shared=(1.0, 0.0))

    def test_full_trace_matches_two_point_noiseless(self):
        cfg = ProtocolConfig()  # T_R = 100 us envelope
        rng = np.random.default_rng(0)
        readout = ReadoutModel()
        ref = acquire_trace(POP_150, True, cfg, readout, rng)
        sig = acquire_trace(POP_150, False, cfg, readout, rng)
        full, *_ = full_trace_pexp(sig, ref)
        cyc = run_experiment(POP_150, ProtocolConfig(cycles=1), readout)[0]
        assert abs(full - two_point_pe(cyc)) / two_point_pe(cyc) < 0.005


class TestTwoPoint:
    def test_no_signal(self):
        assert two_point_pe(CycleRecord(0, 1, 0, 0)) == 0.0

    def test_exact_construction(self):
        assert two_point_pe(CycleRecord(0, 0.999, 0, 0.001)) == pytest.approx(0.001, rel=1e-12)

    def test_simulated_noiseless(self):
        pop = PopulationDistribution((0.9, 0.1, 0.0))
        cyc = run_experiment(pop, ProtocolConfig(cycles=1), ReadoutModel())[0]
        assert two_point_pe(cyc) == pytest.approx(0.1, rel=1e-12)

    def test_negative_values_pass_through(self):
        assert two_point_pe(CycleRecord(0, 1, 0.01, 0.0)) < 0

    def test_invalid_marker(self):
        assert math.isnan(two_point_pe(CycleRecord(0, 0.5, 0.5, 0.0)))
        assert math.isnan(two_point_pe(CycleRecord(0, 1e-8, 0, 0), min_denominator=1e-6))

    @given(
        v=st.lists(st.floats(-10, 10), min_size=4, max_size=4),
        scale=st.floats(1e-3, 1e3),
        offset=st.floats(-100, 100),
    )
    def test_scale_and_offset_invariance(self, v, scale, offset):
        r1, r2, s1, s2 = v
        assume(abs((s2 - s1) + (r2 - r1)) > 1e-2)
        base = two_point_pe(CycleRecord(r1, r2, s1, s2))
        scaled = two_point_pe(CycleRecord(*(scale * x for x in v)))
        shifted = two_point_pe(CycleRecord(*(x + offset for x in v)))
        assert scaled == pytest.approx(base, rel=1e-9, abs=1e-9)
        assert shifted == pytest.approx(base, rel=1e-6, abs=1e-6)

    def test_consistency_at_150mk(self):
        """Low-noise mean converges to the equilibrium ratio, ~2% below P_e."""
        cfg = ProtocolConfig(cycles=4000, averages=5000)
        readout = ReadoutModel(sigma_t=sigma_t_for_target(0.002, 5000), rng_seed=3)
        est = aggregate([two_point_pe(c) for c in run_experiment(POP_150, cfg, readout)])
        assert abs(est.mean - PEXP_150) < 3 * est.stderr
        assert POP_150.pe - est.mean == pytest.approx(0.0194, abs=0.001)

    def test_ratio_bias_is_minus_variance(self):
        # E[N/(N+R)] ~ mu - var(N) for R ~ 1: the estimator's own small-sample bias
        pop = PopulationDistribution((0.999, 0.001, 0.0))
        cfg = ProtocolConfig(cycles=20000, averages=5000)
        readout = ReadoutModel(sigma_t=sigma_t_for_target(0.03, 5000), rng_seed=8)
        est = aggregate([two_point_pe(c) for c in run_experiment(pop, cfg, readout)], gaussian=False)
        assert est.mean - 0.001 == pytest.approx(-(0.03**2), abs=3 * est.stderr)


class TestAggregate:
    def test_table_row_standard_error(self):
        rng = np.random.default_rng(0)
        raw = rng.standard_normal(3000)
        samples = 0.00055 + 0.0215 * (raw - raw.mean()) / raw.std()
        s = aggregate(samples)
        assert s.sigma_c == pytest.approx(0.0215, rel=1e-12)
        assert s.stderr == pytest.approx(0.00039, abs=0.000005)
        assert s.stderr == pytest.approx(s.sigma_c / math.sqrt(3000), rel=1e-12)

    def test_moments_match_scipy(self):
        x = np.random.default_rng(2).gamma(2.0, size=500)
        s = aggregate(x)
        assert s.mean == pytest.approx(np.mean(x))
        assert s.sigma_c == pytest.approx(np.std(x), rel=1e-12)
        assert s.skewness == pytest.approx(sps.skew(x, bias=True), rel=1e-10)
        assert aggregate(x, ddof=1).sigma_c == pytest.approx(np.std(x, ddof=1), rel=1e-12)

    def test_constant_samples(self):
        s = aggregate([0.01] * 10)
        assert s.sigma_c == 0.0 and s.skewness == 0.0 and not s.skewness_defined

    def test_symmetrized_skewness_is_zero(self):
        x = np.random.default_rng(5).exponential(size=400)
        s = aggregate(np.concatenate([x, -x]))
        assert s.skewness == pytest.approx(0.0, abs=1e-12)

    def test_gaussian_skewness_bound(self):
        # Monte Carlo oracle: std of gamma1 for C=3000 normal samples is sqrt(6/C) ~ 0.045
        rng = np.random.default_rng(7)
        g = [aggregate(rng.normal(0.001, 0.021, 3000), gaussian=False).skewness for _ in range(200)]
        assert np.quantile(np.abs(g), 0.99) < 0.15

    def test_invalid_samples_dropped(self):
        s = aggregate([0.1, math.nan, 0.2, 0.3])
        assert s.n_invalid == 1 and s.count == 3 and s.counts.sum() == 3

    def test_all_invalid(self):
        with pytest.raises(ValueError):
            aggregate([math.nan, math.nan])

    def test_histogram_counts_sum_to_c(self):
        s = aggregate(np.random.default_rng(1).normal(0, 0.02, 777))
        assert s.counts.sum() == 777
        np.testing.assert_allclose(np.diff(s.bin_edges), 0.005)


class TestHistogramGaussian:
    def test_recovers_parameters(self):
        x = np.random.default_rng(11).normal(0.00055, 0.0215, 3000)
        mean, std = histogram_gaussian_fit(x)
        assert abs(mean - 0.00055) < 3 * 0.0215 / math.sqrt(3000)
        assert std == pytest.approx(0.0215, rel=0.1)

    def test_edges_on_bin_multiples(self):
        edges, counts = histogram([0.0012, 0.0071, -0.004], 0.005)
        np.testing.assert_allclose(edges / 0.005, np.round(edges / 0.005))
        assert counts.sum() == 3

    def test_single_bin_rejected(self):
        with pytest.raises(ValueError, match="non-empty bins"):
            histogram_gaussian_fit(np.full(100, 0.0012))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            histogram_gaussian_fit(np.zeros(10))

    def test_symmetric_bins_center_on_boundary(self):
        w = 0.005
        counts = [3, 10, 25, 25, 10, 3]
        centers = (np.arange(6) - 2.5) * w
        x = np.repeat(centers, counts)
        mean, _ = histogram_gaussian_fit(x, w)
        assert mean == pytest.approx(0.0, abs=1e-9)


class TestCalibrationFit:
    K = [0.002, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05]

    def test_noiseless_pump_law(self):
        pe = 0.00067
        pts = [(k, k * (1 - pe) + (1 - k) * pe) for k in self.K]
        fit = calibration_fit(pts)
        assert fit.slope == pytest.approx(1 - 2 * pe, rel=1e-10)
        assert fit.intercept == pytest.approx(pe, rel=1e-8)
        assert fit.ci95[0] <= fit.intercept <= fit.ci95[1]

    def test_all_zero(self):
        fit = calibration_fit([(k, 0.0) for k in self.K])
        assert fit.intercept == 0.0 and fit.slope == 0.0

    def test_fixed_slope(self):
        pts = [(k, k + 0.0007) for k in self.K]
        fit = calibration_fit(pts, fixed_slope=1.0)
        assert fit.slope_fixed and fit.intercept == pytest.approx(0.0007, rel=1e-10)

    def test_two_points_exact(self):
        fit = calibration_fit([(0.01, 0.011), (0.03, 0.031)])
        assert fit.slope == pytest.approx(1.0) and fit.intercept == pytest.approx(0.001)
        assert fit.ci95 == (-math.inf, math.inf)

    def test_rank_deficient(self):
        with pytest.raises(ValueError, match="rank"):
            calibration_fit([(0.01, 0.1), (0.01, 0.2), (0.01, 0.3)])

    def test_ci_coverage(self):
        """Repeated-fit simulation: the normal-approximation CI covers ~95%."""
        rng = np.random.default_rng(0)
        k = np.linspace(0.002, 0.05, 25)
        covered = 0
        for _ in range(1000):
            y = 0.00067 + (1 - 2 * 0.00067) * k + rng.normal(0, 0.0004, k.size)
            lo, hi = calibration_fit(list(zip(k, y))).ci95
            covered += lo <= 0.00067 <= hi
        assert 0.91 <= covered / 1000 <= 0.97

    def test_paper_scale_ci_width(self):
        # 0.04% error bars over 0.2-5% pump fractions give a CI of order 0.01-0.1%
        rng = np.random.default_rng(1)
        k = np.linspace(0.002, 0.05, 25)
        y = 0.00067 + k + rng.normal(0, 0.0004, k.size)
        lo, hi = calibration_fit(list(zip(k, y))).ci95
        assert 1e-4 < hi - lo < 1e-3
