import numpy as np
import pytest

from squeezr.exceptions import VCurveError
from squeezr.model import (
    ModelParams,
    OperatingPoint,
    apply_phase_jitter,
    quadrature_variance,
    rotate_quadratures,
    to_decibels,
)
from squeezr.vcurve import fit_v_curve

OFFSETS = np.linspace(-0.030, 0.030, 11)


def v_samples(vertex=5e-3, slope=50.0, floor=12.0, offsets=OFFSETS, noise=None):
    values = floor - slope * np.abs(offsets - vertex)
    if noise is not None:
        values = values + noise
    return list(zip(offsets.tolist(), values.tolist()))


def test_noiseless_vertex_recovered():
    fit = fit_v_curve(v_samples())
    assert fit.vertex == pytest.approx(5e-3, abs=1e-9)
    assert fit.slope == pytest.approx(50.0, rel=1e-6)
    assert fit.floor == pytest.approx(12.0, abs=1e-6)
    assert fit.residual_rms < 1e-6


def test_noisy_vertex_within_tolerance():
    errors = []
    for seed in range(100):
        noise = 0.05 * np.random.default_rng(seed).standard_normal(len(OFFSETS))
        fit = fit_v_curve(v_samples(noise=noise))
        errors.append(abs(fit.vertex - 5e-3))
    assert np.percentile(errors, 95) <= 1.5e-3


def test_three_symmetric_points():
    fit = fit_v_curve([(-0.01, 10.0), (0.0, 11.0), (0.01, 10.0)])
    assert fit.vertex == 0.0


def test_vertex_inside_scanned_range():
    fit = fit_v_curve(v_samples(vertex=0.012))
    assert OFFSETS[0] <= fit.vertex <= OFFSETS[-1]


def test_translation_equivariance():
    shift = 0.0123
    base = fit_v_curve(v_samples(vertex=-0.004))
    shifted = fit_v_curve(
        v_samples(vertex=-0.004 + shift, offsets=OFFSETS + shift)
    )
    assert shifted.vertex - base.vertex == pytest.approx(shift, abs=1e-9)


def _v_sse(samples, vertex):
    offsets, values = np.asarray(samples).T
    u = np.abs(offsets - vertex)
    coeffs = np.polyfit(u, values, 1)
    residual = values - np.polyval(coeffs, u)
    return float(residual @ residual)


def test_vertex_is_global_optimum_of_noisy_scans():
    candidates = np.linspace(OFFSETS[0], OFFSETS[-1], 2001)
    for seed in range(50):
        noise = 0.5 * np.random.default_rng(seed).standard_normal(len(OFFSETS))
        samples = v_samples(slope=200.0, noise=noise)
        fit = fit_v_curve(samples)
        grid_best = min(_v_sse(samples, x) for x in candidates)
        fitted = fit.residual_rms**2 * len(OFFSETS)
        assert fitted <= grid_best + 1e-9


def test_scaling_values_keeps_vertex():
    noise = 0.05 * np.random.default_rng(3).standard_normal(len(OFFSETS))
    samples = v_samples(noise=noise)
    scaled = [(x, 2.5 * y) for x, y in samples]
    assert fit_v_curve(scaled).vertex == pytest.approx(
        fit_v_curve(samples).vertex, abs=1e-8
    )


def test_unsorted_input():
    samples = v_samples()
    fit = fit_v_curve(samples[::-1])
    assert fit.vertex == pytest.approx(5e-3, abs=1e-9)


@pytest.mark.parametrize(
    "samples,match",
    [
        ([(0.0, 1.0), (0.01, 2.0)], "at least 3"),
        ([(0.0, 1.0), (0.0, 2.0), (0.01, 1.5)], "distinct"),
        ([(0.0, 10.0), (0.01, 10.0), (0.02, 10.0)], "flat scan"),
        ([(0.0, 10.0), (0.01, float("nan")), (0.02, 9.0)], "non-finite"),
    ],
)
def test_invalid_scans(samples, match):
    with pytest.raises(VCurveError, match=match):
        fit_v_curve(samples)


def test_inverted_scan_rejected():
    samples = [(x, 10.0 + 50.0 * abs(x)) for x in OFFSETS.tolist()]
    with pytest.raises(VCurveError, match="inverted"):
        fit_v_curve(samples)


def test_unknown_model():
    with pytest.raises(ValueError, match="v-curve model"):
        fit_v_curve(v_samples(), model="parabola")


def test_quadrature_model_on_physical_scan():
    params = ModelParams()
    ideal = quadrature_variance(params, OperatingPoint(0.67))
    vertex = 3e-3
    samples = []
    for offset in OFFSETS.tolist():
        pair = apply_phase_jitter(
            rotate_quadratures(ideal, vertex - offset), params.phase_jitter
        )
        samples.append((offset, -to_decibels(pair.v_squeezed)))
    fit = fit_v_curve(samples, model="quadrature")
    assert fit.model == "quadrature"
    best = apply_phase_jitter(ideal, params.phase_jitter)
    assert fit.vertex == pytest.approx(vertex, abs=2e-5)
    assert fit.floor == pytest.approx(-to_decibels(best.v_squeezed), abs=1e-3)
