import math

import numpy as np
import pytest

from squeezr.characterize import (
    DEFAULT_SWEEP_RATIOS,
    FitResult,
    PumpSweepPoint,
    contaminate_electronic_noise,
    correct_electronic_noise,
    duty_cycle_report,
    fit_pump_sweep,
    pump_sweep_curve,
    read_sweep_csv,
    summarize_trace,
    synthesize_pump_sweep,
    write_sweep_csv,
)
from squeezr.exceptions import SchemaError
from squeezr.model import ModelParams
from squeezr.trace import Trace, TraceRecord

PARAMS = ModelParams()
GAMMA = PARAMS.decay_rate


def make_trace(levels, locked=None, events=None, dt=1.0):
    locked = [True] * len(levels) if locked is None else locked
    events = [None] * len(levels) if events is None else events
    return Trace(
        TraceRecord(t=i * dt, squeezing_dB=-level, locked=lock, event=event)
        for i, (level, lock, event) in enumerate(zip(levels, locked, events))
    )


class TestElectronicNoise:
    def test_shot_noise_fixed_point(self):
        for clearance in (10.0, 18.0, 40.0):
            assert correct_electronic_noise(1.0, clearance) == pytest.approx(1.0, abs=1e-15)

    def test_published_clearance(self):
        assert correct_electronic_noise(0.074667, 18.0) == pytest.approx(0.06, abs=1e-5)

    def test_correction_inverts_contamination(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            variance = float(rng.uniform(0.01, 200.0))
            clearance = float(rng.uniform(10.0, 40.0))
            raw = contaminate_electronic_noise(variance, clearance)
            assert correct_electronic_noise(raw, clearance) == pytest.approx(
                variance, rel=1e-12, abs=1e-12
            )

    def test_correction_deepens_squeezing(self):
        assert correct_electronic_noise(0.1, 18.0) < 0.1

    def test_unphysical_reading(self):
        with pytest.raises(ValueError, match="unphysical"):
            correct_electronic_noise(0.01, 18.0)

    @pytest.mark.parametrize("raw,clearance", [(0.0, 18.0), (0.5, 0.0)])
    def test_invalid_inputs(self, raw, clearance):
        with pytest.raises(ValueError):
            correct_electronic_noise(raw, clearance)


class TestPumpSweepFit:
    def test_noiseless_sweep_is_recovered_exactly(self):
        points = synthesize_pump_sweep(PARAMS, noise=False)
        fit = fit_pump_sweep(points, GAMMA)
        assert fit.eta_total == pytest.approx(0.95, abs=1e-7)
        assert fit.theta_jitter == pytest.approx(4.36e-3, abs=1e-7)
        assert fit.residual_rms < 1e-9
        assert fit.p_thr_fixed
        assert fit.n_points == 8
        assert not fit.eta_at_bound

    def test_noisy_sweep_recovery_rate(self):
        recovered = 0
        for seed in range(100):
            fit = fit_pump_sweep(synthesize_pump_sweep(PARAMS, seed=seed), GAMMA)
            if abs(fit.eta_total - 0.95) <= 0.01 and abs(fit.theta_jitter - 4.36e-3) <= 1e-3:
                recovered += 1
        assert recovered >= 95

    def test_noisy_sweep_uncertainty(self):
        points = synthesize_pump_sweep(PARAMS, sigma_dB=0.1, seed=0)
        fit = fit_pump_sweep(points, GAMMA)
        assert 0.0 < fit.eta_total_sigma < 0.01
        low, high = fit.interval("eta_total")
        assert low < fit.eta_total < high

    def test_zero_jitter_truth(self):
        truth = PARAMS.replace(phase_jitter=0.0)
        fits = [
            fit_pump_sweep(synthesize_pump_sweep(truth, seed=seed), GAMMA)
            for seed in range(100)
        ]
        estimates = [fit.theta_jitter for fit in fits]
        assert min(estimates) >= 0.0
        assert np.percentile(estimates, 2.5) == pytest.approx(0.0, abs=5e-4)
        assert np.median(estimates) < 2e-3

        covered = 0
        for fit in fits:
            lo, hi = fit.interval("theta_jitter")
            assert 0.0 <= lo <= fit.theta_jitter <= hi
            covered += lo <= 0.0 <= hi
        assert covered >= 90

    def test_interval_respects_bounds(self):
        fit = FitResult(
            eta_total=0.9,
            eta_total_sigma=0.2,
            theta_jitter=0.0,
            theta_jitter_sigma=math.inf,
            p_thr_mW=710.0,
            p_thr_mW_sigma=None,
            p_thr_fixed=True,
            residual_rms=0.0,
            chi_square=0.0,
            n_points=8,
            eta_at_bound=False,
            starts=1,
        )
        assert fit.interval("eta_total") == (0.0, 1.0)
        assert fit.interval("theta_jitter") == (0.0, math.inf)
        assert fit.interval("p_thr_mW") == (710.0, 710.0)

    def test_uncertainty_shrinks_with_more_points(self):
        single = synthesize_pump_sweep(PARAMS, noise=False)
        doubled = synthesize_pump_sweep(
            PARAMS, ratios=list(DEFAULT_SWEEP_RATIOS) * 2, noise=False
        )
        sigma_single = fit_pump_sweep(single, GAMMA).eta_total_sigma
        sigma_doubled = fit_pump_sweep(doubled, GAMMA).eta_total_sigma
        assert sigma_doubled / sigma_single == pytest.approx(1 / math.sqrt(2), rel=0.2)

    def test_free_threshold(self):
        points = synthesize_pump_sweep(PARAMS, noise=False)
        fit = fit_pump_sweep(points, GAMMA, fit_p_thr=True)
        assert not fit.p_thr_fixed
        assert fit.p_thr_mW == pytest.approx(710.0, rel=1e-6)
        assert fit.p_thr_mW_sigma is not None

    def test_too_few_points(self):
        points = synthesize_pump_sweep(PARAMS, ratios=[0.2, 0.5, 0.8], noise=False)
        with pytest.raises(ValueError, match="at least 4"):
            fit_pump_sweep(points, GAMMA)

    def test_narrow_range(self):
        points = synthesize_pump_sweep(
            PARAMS, ratios=[0.5, 0.55, 0.6, 0.65], noise=False
        )
        with pytest.raises(ValueError, match="span"):
            fit_pump_sweep(points, GAMMA)

    def test_fit_result_to_dict(self):
        fit = fit_pump_sweep(synthesize_pump_sweep(PARAMS, noise=False), GAMMA)
        data = fit.to_dict()
        assert set(data) >= {"eta_total", "eta_total_sigma", "theta_jitter", "residual_rms"}
        assert data["p_thr_mW_sigma"] is None

    def test_point_validation(self):
        with pytest.raises(ValueError):
            PumpSweepPoint(pump_ratio=1.0, v_minus_dB=-10.0, v_plus_dB=15.0, sigma_dB=0.1)
        with pytest.raises(ValueError):
            PumpSweepPoint(pump_ratio=0.5, v_minus_dB=-10.0, v_plus_dB=15.0, sigma_dB=0.0)

    def test_model_curve(self):
        curve = pump_sweep_curve(PARAMS)
        assert list(curve.columns) == ["pump_ratio", "v_minus_dB", "v_plus_dB"]
        assert curve["pump_ratio"].iloc[0] == 0.0
        assert curve["pump_ratio"].iloc[-1] == pytest.approx(0.95)
        assert curve["v_plus_dB"].is_monotonic_increasing
        assert curve["v_minus_dB"].iloc[0] == pytest.approx(0.0, abs=1e-12)


class TestSweepCsv:
    def test_written_sweep_fits(self, tmp_path):
        path = write_sweep_csv(synthesize_pump_sweep(PARAMS, seed=4), tmp_path / "s.csv")
        fit = fit_pump_sweep(read_sweep_csv(path), GAMMA)
        assert fit.eta_total == pytest.approx(0.95, abs=0.01)

    def test_sigma_column_optional(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("pump_ratio,v_minus_dB,v_plus_dB\n0.2,-5,6\n0.5,-9,12\n")
        points = read_sweep_csv(path)
        assert [p.sigma_dB for p in points] == [0.1, 0.1]

    def test_single_quadrature(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("pump_ratio,v_minus_dB\n0.2,-5\n0.5,-9\n")
        with pytest.raises(SchemaError, match="both quadratures required"):
            read_sweep_csv(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("")
        with pytest.raises(SchemaError, match="empty"):
            read_sweep_csv(path)

    def test_bad_value_names_row_and_column(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("pump_ratio,v_minus_dB,v_plus_dB\n0.2,-5,6\n0.5,oops,12\n")
        with pytest.raises(SchemaError, match="row 3: column 'v_minus_dB'"):
            read_sweep_csv(path)


class TestDutyCycle:
    def test_counting(self):
        levels = [10.5] * 3480 + [9.0] * 120
        report = duty_cycle_report(make_trace(levels))
        assert report.duty(10.0) == pytest.approx(0.9667, abs=1e-4)
        assert report.lock_fraction == 1.0
        assert report.total_duration == 3600.0

    def test_cumulative_is_monotone(self):
        rng = np.random.default_rng(2)
        levels = rng.uniform(0.0, 13.0, 2000)
        locked = (rng.uniform(size=2000) > 0.05).tolist()
        report = duty_cycle_report(make_trace(levels.tolist(), locked))
        fractions = [f for _, f in report.cumulative]
        assert all(a >= b for a, b in zip(fractions, fractions[1:]))
        assert all(0.0 <= f <= 1.0 for f in fractions)
        assert report.duty(0.0) >= report.duty(10.0) >= report.duty(12.0)

    def test_relock_time_counts_as_downtime(self):
        levels = [11.0] * 90 + [0.0] * 10
        locked = [True] * 90 + [False] * 10
        report = duty_cycle_report(make_trace(levels, locked))
        assert report.lock_fraction == pytest.approx(0.9)
        assert report.duty(10.0) == pytest.approx(0.9)
        assert report.duty(10.0, locked_only=True) == pytest.approx(1.0)

    def test_time_weighting(self):
        trace = Trace(
            [
                TraceRecord(t=0.0, squeezing_dB=-12.0),
                TraceRecord(t=9.0, squeezing_dB=-8.0),
                TraceRecord(t=10.0, squeezing_dB=-8.0),
            ]
        )
        report = duty_cycle_report(trace, thresholds_dB=[10.0])
        assert report.duty(10.0) == pytest.approx(9.0 / 11.0)
        assert report.total_duration == pytest.approx(11.0)

    def test_histogram_counts_locked_samples(self):
        rng = np.random.default_rng(5)
        levels = rng.normal(11.5, 0.4, 1000).tolist()
        report = duty_cycle_report(make_trace(levels))
        assert sum(report.histogram_counts) == 1000
        widths = np.diff(report.histogram_edges)
        assert np.allclose(widths, 0.1)
        frame = report.histogram_frame()
        assert frame["count"].sum() == 1000

    def test_unknown_threshold(self):
        report = duty_cycle_report(make_trace([11.0, 11.0]))
        with pytest.raises(KeyError):
            report.duty(7.7)

    def test_empty_trace(self):
        with pytest.raises(ValueError):
            duty_cycle_report(Trace())

    def test_to_dict_is_json_ready(self):
        data = duty_cycle_report(make_trace([0.0, 0.0], [False, False])).to_dict()
        assert data["lock_fraction"] == 0.0
        assert data["mean_dB_of_dB"] is None
        assert data["histogram"]["counts"] == []


class TestSummary:
    def test_constant_trace(self):
        summary = summarize_trace(make_trace([11.9] * 100))
        assert summary.mean_dB_of_dB == pytest.approx(11.9)
        assert summary.dB_of_mean_variance == pytest.approx(11.9)
        assert summary.max_dB == pytest.approx(11.9)

    def test_two_levels(self):
        summary = summarize_trace(make_trace([10.0] * 50 + [12.0] * 50))
        assert summary.mean_dB_of_dB == pytest.approx(11.0)
        assert summary.dB_of_mean_variance == pytest.approx(10.88, abs=0.01)

    def test_jensen(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            levels = rng.uniform(5.0, 13.0, 200).tolist()
            summary = summarize_trace(make_trace(levels))
            assert summary.dB_of_mean_variance <= summary.mean_dB_of_dB + 1e-12

    def test_relocks_and_lock_episodes(self):
        levels = [11.0] * 30 + [0.0] * 5 + [11.0] * 50 + [0.0] * 5 + [11.0] * 10
        locked = [lv > 0 for lv in levels]
        events = [None] * len(levels)
        events[30] = "relock-triggered"
        events[34] = "relock-success"
        events[85] = "relock-triggered;retry"
        summary = summarize_trace(make_trace(levels, locked, events))
        assert summary.relock_count == 2
        assert summary.longest_unbroken_lock_s == pytest.approx(50.0)
        assert summary.duration_s == pytest.approx(100.0)
