"""Below-threshold OPA model.

Cavity figures of merit for the bow-tie squeezer and the quadrature-variance
model of a doubly-resonant OPA, including the coupling of residual phase
jitter between pump and local oscillator into the squeezed quadrature.

All variances are in shot-noise units (vacuum = 1). Functions accept floats or
numpy arrays for the pump ratio / frequency arguments.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8
FOURIER_FREQ = 500e3

# Published anchors the model is checked against.
PUBLISHED_DECAY_RATE = 9.49e7
PUBLISHED_PHASE_PENALTY_DB = 0.2
PUBLISHED_OPERATING_RATIO = 0.67
PUBLISHED_MEAN_SQUEEZING_DB = 11.9
PUBLISHED_MAX_SQUEEZING_DB = 12.6
PUBLISHED_FINESSE = 21.0
PUBLISHED_BANDWIDTH_HZ = 30e6
PUBLISHED_EFFICIENCY_GAIN_DB = 2.8


@dataclass(frozen=True)
class CavityGeometry:
    """Loss budget and size of the squeezing cavity.

    Attributes:
        output_coupler_reflectivity: Power reflectivity R of the output coupler.
        round_trip_loss: Intracavity round-trip power loss L.
        round_trip_length: Round-trip length l in meters.
    """

    output_coupler_reflectivity: float = 0.75
    round_trip_loss: float = 0.001
    round_trip_length: float = 0.456

    def __post_init__(self):
        r = self.output_coupler_reflectivity
        if not 0.0 < r < 1.0:
            raise ValueError(f"output_coupler_reflectivity must be in (0, 1), got {r}")
        if not 0.0 <= self.round_trip_loss < 1.0:
            raise ValueError(
                f"round_trip_loss must be in [0, 1), got {self.round_trip_loss}"
            )
        if not self.round_trip_length > 0.0:
            raise ValueError(
                f"round_trip_length must be positive, got {self.round_trip_length}"
            )

    @property
    def round_trip_decay(self) -> float:
        """Fractional power lost per round trip, -ln(R) + L."""
        return -math.log(self.output_coupler_reflectivity) + self.round_trip_loss


@dataclass(frozen=True)
class CavityFigures:
    escape_efficiency: float
    finesse: float
    fwhm_bandwidth_Hz: float
    fsr_Hz: float

    def to_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ModelParams:
    """Cavity and detection-chain parameters of the variance model.

    The decay rate is always derived from the geometry, so a ModelParams can
    never carry a gamma that disagrees with its cavity.
    """

    geometry: CavityGeometry = field(default_factory=CavityGeometry)
    threshold_power: float = 0.710
    total_efficiency: float = 0.95
    phase_jitter: float = 4.36e-3

    def __post_init__(self):
        if not self.threshold_power > 0.0:
            raise ValueError(
                f"threshold_power must be positive, got {self.threshold_power}"
            )
        if not 0.0 <= self.total_efficiency <= 1.0:
            raise ValueError(
                f"total_efficiency must be in [0, 1], got {self.total_efficiency}"
            )
        if not 0.0 <= self.phase_jitter < math.pi / 2:
            raise ValueError(
                f"phase_jitter must be in [0, pi/2), got {self.phase_jitter}"
            )

    @property
    def decay_rate(self) -> float:
        return cavity_decay_rate(self.geometry)

    def replace(self, **changes: Any) -> ModelParams:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class OperatingPoint:
    pump_ratio: float
    fourier_freq: float = FOURIER_FREQ

    def __post_init__(self):
        _check_pump_ratio(self.pump_ratio)
        if self.fourier_freq < 0.0:
            raise ValueError(f"fourier_freq must be >= 0, got {self.fourier_freq}")


@dataclass(frozen=True)
class QuadraturePair:
    """Variances of the anti-squeezed (V+) and squeezed (V-) quadratures."""

    v_antisqueezed: float
    v_squeezed: float

    @property
    def antisqueezing_db(self) -> float:
        return to_decibels(self.v_antisqueezed)

    @property
    def squeezing_db(self) -> float:
        return to_decibels(self.v_squeezed)

    @property
    def squeezing_level(self) -> float:
        """Magnitude of squeezing below shot noise, positive dB."""
        return -self.squeezing_db


def _check_pump_ratio(pump_ratio) -> None:
    ratio = np.asarray(pump_ratio, dtype=float)
    if np.any(ratio < 0.0) or np.any(ratio >= 1.0) or np.any(~np.isfinite(ratio)):
        raise ValueError(
            f"pump_ratio must be in [0, 1) (below threshold), got {pump_ratio}"
        )


def cavity_decay_rate(geometry: CavityGeometry) -> float:
    """Angular half-linewidth gamma = c(-ln R + L) / 2l in rad/s."""
    return SPEED_OF_LIGHT * geometry.round_trip_decay / (2.0 * geometry.round_trip_length)


def cavity_figures(geometry: CavityGeometry) -> CavityFigures:
    transmission = 1.0 - geometry.output_coupler_reflectivity
    finesse = 2.0 * math.pi / geometry.round_trip_decay
    fsr = SPEED_OF_LIGHT / geometry.round_trip_length
    return CavityFigures(
        escape_efficiency=transmission / (transmission + geometry.round_trip_loss),
        finesse=finesse,
        fwhm_bandwidth_Hz=fsr / finesse,
        fsr_Hz=fsr,
    )


def ideal_variances(
    total_efficiency: float,
    decay_rate: float,
    pump_ratio,
    fourier_freq=FOURIER_FREQ,
):
    """Return (V+, V-) without phase noise; works elementwise on arrays."""
    _check_pump_ratio(pump_ratio)
    x = np.sqrt(np.asarray(pump_ratio, dtype=float))
    detuning = (2.0 * np.pi * np.asarray(fourier_freq, dtype=float) / decay_rate) ** 2
    gain = total_efficiency * 4.0 * x
    v_plus = 1.0 + gain / ((1.0 - x) ** 2 + detuning)
    v_minus = 1.0 - gain / ((1.0 + x) ** 2 + detuning)
    return v_plus, v_minus


def quadrature_variance(params: ModelParams, op_point: OperatingPoint) -> QuadraturePair:
    """Ideal-OPA variances at one operating point; phase jitter is not applied."""
    v_plus, v_minus = ideal_variances(
        params.total_efficiency,
        params.decay_rate,
        op_point.pump_ratio,
        op_point.fourier_freq,
    )
    return QuadraturePair(v_antisqueezed=float(v_plus), v_squeezed=float(v_minus))


def mix_quadratures(v_plus, v_minus, angle):
    """Elementwise V'+ = V+ cos^2 + V- sin^2 and V'- = V- cos^2 + V+ sin^2."""
    c2 = np.cos(angle) ** 2
    s2 = np.sin(angle) ** 2
    return v_plus * c2 + v_minus * s2, v_minus * c2 + v_plus * s2


def rotate_quadratures(pair: QuadraturePair, angle: float) -> QuadraturePair:
    """Mix the quadratures by an arbitrary angle (no precondition on angle)."""
    c2 = math.cos(angle) ** 2
    s2 = math.sin(angle) ** 2
    return QuadraturePair(
        v_antisqueezed=pair.v_antisqueezed * c2 + pair.v_squeezed * s2,
        v_squeezed=pair.v_squeezed * c2 + pair.v_antisqueezed * s2,
    )


def apply_phase_jitter(pair: QuadraturePair, theta_jitter: float) -> QuadraturePair:
    """Couple anti-squeezing into the squeezed quadrature for rms jitter theta."""
    if not 0.0 <= theta_jitter < math.pi / 2:
        raise ValueError(f"theta_jitter must be in [0, pi/2), got {theta_jitter}")
    return rotate_quadratures(pair, theta_jitter)


def measured_variances(params: ModelParams, op_point: OperatingPoint) -> QuadraturePair:
    """Variances as seen at the homodyne detector (ideal model plus jitter)."""
    return apply_phase_jitter(quadrature_variance(params, op_point), params.phase_jitter)


def squeezing_spectrum(params: ModelParams, pump_ratio: float, freqs) -> tuple:
    """V+ and V- arrays (jitter applied) over a set of Fourier frequencies."""
    v_plus, v_minus = ideal_variances(
        params.total_efficiency, params.decay_rate, pump_ratio, np.asarray(freqs)
    )
    return mix_quadratures(v_plus, v_minus, params.phase_jitter)


def to_decibels(v):
    """10 log10 of a shot-noise-normalised variance."""
    arr = np.asarray(v, dtype=float)
    if np.any(~(arr > 0.0)):
        raise ValueError(f"variance must be positive to express in dB, got {v}")
    result = 10.0 * np.log10(arr)
    return float(result) if result.ndim == 0 else result


def from_decibels(db):
    result = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return float(result) if result.ndim == 0 else result


def phase_noise_penalty_db(params: ModelParams, op_point: OperatingPoint) -> float:
    """Squeezing lost (dB) to phase jitter at the given operating point."""
    ideal = quadrature_variance(params, op_point)
    jittered = apply_phase_jitter(ideal, params.phase_jitter)
    return jittered.squeezing_db - ideal.squeezing_db


def efficiency_gain_db(
    params: ModelParams, delta_eta: float, op_point: OperatingPoint
) -> float:
    """Extra measured squeezing (dB) if total efficiency rose by delta_eta."""
    improved = params.replace(
        total_efficiency=min(1.0, params.total_efficiency + delta_eta)
    )
    return (
        measured_variances(improved, op_point).squeezing_level
        - measured_variances(params, op_point).squeezing_level
    )


@dataclass(frozen=True)
class Check:
    name: str
    description: str
    value: float
    published_value: float
    lower: float
    upper: float
    unit: str
    enforced: bool = True

    @property
    def passed(self) -> bool:
        return self.lower <= self.value <= self.upper

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["passed"] = self.passed
        return data


@dataclass(frozen=True)
class ConsistencyReport:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        """True iff every enforced check passes."""
        return all(check.passed for check in self.checks if check.enforced)

    def __getitem__(self, name: str) -> Check:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [check.to_dict() for check in self.checks],
        }


def consistency_report(params: ModelParams | None = None) -> ConsistencyReport:
    """Evaluate the model against the published cavity and squeezing numbers."""
    params = params or ModelParams()
    figures = cavity_figures(params.geometry)
    gamma = params.decay_rate
    at_07 = OperatingPoint(pump_ratio=0.7)
    at_op = OperatingPoint(pump_ratio=PUBLISHED_OPERATING_RATIO)
    predicted = measured_variances(params, at_op).squeezing_level

    checks = (
        Check(
            name="decay_rate",
            description="cavity decay rate from R, L, l",
            value=gamma,
            published_value=PUBLISHED_DECAY_RATE,
            lower=PUBLISHED_DECAY_RATE * 0.995,
            upper=PUBLISHED_DECAY_RATE * 1.005,
            unit="rad/s",
        ),
        Check(
            name="escape_efficiency",
            description="escape efficiency above 0.99",
            value=figures.escape_efficiency,
            published_value=0.99,
            lower=0.99,
            upper=1.0,
            unit="",
        ),
        Check(
            name="phase_noise_penalty",
            description="squeezing lost to phase jitter at P/P_thr = 0.7",
            value=phase_noise_penalty_db(params, at_07),
            published_value=PUBLISHED_PHASE_PENALTY_DB,
            lower=0.10,
            upper=0.25,
            unit="dB",
        ),
        Check(
            name="operating_squeezing",
            description="predicted squeezing at P/P_thr = 0.67",
            value=predicted,
            published_value=PUBLISHED_MEAN_SQUEEZING_DB,
            lower=11.5,
            upper=12.7,
            unit="dB",
        ),
        Check(
            name="finesse",
            description="finesse (published value is rounded)",
            value=figures.finesse,
            published_value=PUBLISHED_FINESSE,
            lower=PUBLISHED_FINESSE - 1.0,
            upper=PUBLISHED_FINESSE + 1.0,
            unit="",
            enforced=False,
        ),
        Check(
            name="bandwidth",
            description="cavity FWHM bandwidth (published value is rounded)",
            value=figures.fwhm_bandwidth_Hz,
            published_value=PUBLISHED_BANDWIDTH_HZ,
            lower=PUBLISHED_BANDWIDTH_HZ * 0.95,
            upper=PUBLISHED_BANDWIDTH_HZ * 1.05,
            unit="Hz",
            enforced=False,
        ),
        Check(
            name="efficiency_gain",
            description="gain from +0.025 total efficiency at P/P_thr = 0.7",
            value=efficiency_gain_db(params, 0.025, at_07),
            published_value=PUBLISHED_EFFICIENCY_GAIN_DB,
            lower=PUBLISHED_EFFICIENCY_GAIN_DB - 0.3,
            upper=PUBLISHED_EFFICIENCY_GAIN_DB + 0.3,
            unit="dB",
            enforced=False,
        ),
    )
    return ConsistencyReport(checks=checks)
