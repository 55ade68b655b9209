"""Vertex fits of phase-offset scans.

A scan is a list of ``(offset_rad, squeezing_magnitude_dB)`` samples. The
default model is the literal v-curve ``b - a*|phi - phi0|``; for each candidate
vertex the slope and floor follow from a closed-form linear fit, so the search
is one-dimensional. ``model="quadrature"`` instead fits the exact
rotated-quadrature curve in dB.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from squeezr._utils import unknown_option_message
from squeezr.exceptions import VCurveError

VCURVE_MODELS = ("v", "quadrature")


@dataclass(frozen=True)
class VCurveFit:
    """Fitted vertex of a phase scan.

    Attributes:
        vertex: Offset of maximum squeezing (rad).
        slope: V-curve slope a (dB/rad), positive for a valid fit.
        floor: Squeezing magnitude at the vertex (dB).
        residual_rms: Rms misfit (dB).
        model: Which curve was fitted.
    """

    vertex: float
    slope: float
    floor: float
    residual_rms: float
    model: str = "v"


def _linear_subfit(offsets: np.ndarray, values: np.ndarray, vertex: float):
    """Best (a, b, sse) of values ~ b - a*|offsets - vertex|."""
    u = np.abs(offsets - vertex)
    u_mean = u.mean()
    du = u - u_mean
    var = float(du @ du)
    y_mean = values.mean()
    if var == 0.0:
        a = 0.0
    else:
        a = -float(du @ (values - y_mean)) / var
    b = y_mean + a * u_mean
    residual = values - (b - a * u)
    return a, b, float(residual @ residual)


def _validate(samples: Sequence[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    if len(samples) < 3:
        raise VCurveError(f"v-curve fit needs at least 3 samples, got {len(samples)}")
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise VCurveError("samples must be (offset, squeezing_dB) pairs")
    if not np.all(np.isfinite(data)):
        raise VCurveError("samples contain non-finite values")
    order = np.argsort(data[:, 0], kind="stable")
    offsets = data[order, 0]
    values = data[order, 1]
    if np.any(np.diff(offsets) == 0.0):
        raise VCurveError("scan offsets must be distinct")
    if np.all(values == values[0]):
        raise VCurveError("flat scan: all squeezing readings are equal")
    return offsets, values


def _fit_v(offsets: np.ndarray, values: np.ndarray) -> VCurveFit:
    sse_at = [_linear_subfit(offsets, values, x)[2] for x in offsets]
    k = int(np.argmin(sse_at))
    best_vertex = float(offsets[k])
    best_sse = sse_at[k]

    def sse(x: float) -> float:
        return _linear_subfit(offsets, values, x)[2]

    # The sse is smooth between samples but can have its minimum in any gap.
    for left, right in zip(offsets[:-1], offsets[1:]):
        result = minimize_scalar(
            sse,
            bounds=(float(left), float(right)),
            method="bounded",
            options={"xatol": 1e-13, "maxiter": 500},
        )
        if result.fun < best_sse:
            best_sse = float(result.fun)
            best_vertex = float(result.x)

    a, b, sse_final = _linear_subfit(offsets, values, best_vertex)
    if not a > 0.0:
        raise VCurveError(
            f"inverted scan: best v-curve has slope {a:.4g} dB/rad (expected > 0)"
        )
    return VCurveFit(
        vertex=best_vertex,
        slope=a,
        floor=b,
        residual_rms=math.sqrt(sse_final / len(offsets)),
        model="v",
    )


def _quadrature_db(x: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    vertex, log_v_minus, log_v_plus = x
    angle = offsets - vertex
    variance = np.exp(log_v_minus) * np.cos(angle) ** 2 + np.exp(log_v_plus) * np.sin(
        angle
    ) ** 2
    return -10.0 * np.log10(variance)


def _fit_quadrature(offsets: np.ndarray, values: np.ndarray) -> VCurveFit:
    start = _fit_v(offsets, values)
    v_minus = 10.0 ** (-start.floor / 10.0)
    span = max(abs(offsets[0] - start.vertex), abs(offsets[-1] - start.vertex))
    edge_variance = 10.0 ** (-values.min() / 10.0)
    v_plus = max(1.0, (edge_variance - v_minus) / max(math.sin(span) ** 2, 1e-12))
    x0 = np.array([start.vertex, math.log(v_minus), math.log(v_plus)])
    result = least_squares(
        lambda x: _quadrature_db(x, offsets) - values,
        x0,
        bounds=(
            [offsets[0], -30.0, 0.0],
            [offsets[-1], 0.0, 30.0],
        ),
        method="trf",
        x_scale="jac",
    )
    if not result.success:
        raise VCurveError(f"quadrature v-curve fit failed: {result.message}")
    vertex = float(result.x[0])
    floor = float(_quadrature_db(result.x, np.array([vertex]))[0])
    return VCurveFit(
        vertex=vertex,
        slope=start.slope,
        floor=floor,
        residual_rms=float(np.sqrt(np.mean(result.fun**2))),
        model="quadrature",
    )


def fit_v_curve(
    samples: Sequence[tuple[float, float]], model: str = "v"
) -> VCurveFit:
    """Locate the offset of maximum squeezing in a phase scan.

    Args:
        samples: ``(offset_rad, squeezing magnitude dB)`` pairs, at least 3,
            with distinct offsets. Larger magnitude means more squeezing.
        model: ``"v"`` (default) or ``"quadrature"``.

    Raises:
        VCurveError: Too few points, repeated offsets, a flat scan or an
            inverted best fit.
    """
    if model not in VCURVE_MODELS:
        raise ValueError(unknown_option_message("v-curve model", model, VCURVE_MODELS))
    offsets, values = _validate(samples)
    if model == "quadrature":
        return _fit_quadrature(offsets, values)
    return _fit_v(offsets, values)
