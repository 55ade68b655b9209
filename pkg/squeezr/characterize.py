"""Parameter estimation and long-run analytics.

- Electronic-noise contamination and its correction (homodyne dark noise).
- The pump-sweep fit of total efficiency and phase jitter (optionally the
  threshold power) against the quadrature-variance model.
- Duty-cycle and trace statistics over campaign telemetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from squeezr._utils import finite_or_none
from squeezr.exceptions import FitError, SchemaError
from squeezr.model import (
    FOURIER_FREQ,
    ModelParams,
    ideal_variances,
    mix_quadratures,
    to_decibels,
)
from squeezr.trace import Trace

DEFAULT_SWEEP_RATIOS = tuple(np.round(np.linspace(0.2, 0.9, 8), 10))
DEFAULT_SWEEP_SIGMA_DB = 0.1
DEFAULT_THRESHOLDS_DB = (0.0, 3.0, 6.0, 9.0, 9.5, 10.0, 11.0, 12.0)
HISTOGRAM_BIN_DB = 0.1

ETA_GRID = np.round(np.arange(0.5, 1.0 + 1e-9, 0.05), 10)
THETA_GRID = np.round(np.arange(0.0, 0.05 + 1e-12, 0.005), 10)
_N_STARTS = 5
_THETA_UPPER = 0.5


def _dark_fraction(clearance_dB: float) -> float:
    if not clearance_dB > 0.0:
        raise ValueError(f"clearance_dB must be positive, got {clearance_dB}")
    return 10.0 ** (-clearance_dB / 10.0)


def contaminate_electronic_noise(variance: float, clearance_dB: float) -> float:
    """Raw reading of a variance when both signal and shot-noise traces carry dark noise."""
    if not variance > 0.0:
        raise ValueError(f"variance must be positive, got {variance}")
    d = _dark_fraction(clearance_dB)
    return (variance + d) / (1.0 + d)


def correct_electronic_noise(raw_variance: float, clearance_dB: float) -> float:
    """Remove dark noise from a shot-noise-normalised reading.

    Args:
        raw_variance: Measured variance relative to the measured shot noise.
        clearance_dB: How far the dark noise sits below shot noise.

    Raises:
        ValueError: If the reading is non-positive or the corrected variance
            would be non-positive.
    """
    if not raw_variance > 0.0:
        raise ValueError(f"raw_variance must be positive, got {raw_variance}")
    d = _dark_fraction(clearance_dB)
    corrected = raw_variance * (1.0 + d) - d
    if not corrected > 0.0:
        raise ValueError(
            f"unphysical: dark noise exceeds signal (raw={raw_variance}, "
            f"clearance={clearance_dB} dB)"
        )
    return corrected


# -- pump sweep ---------------------------------------------------------------


@dataclass(frozen=True)
class PumpSweepPoint:
    pump_ratio: float
    v_minus_dB: float
    v_plus_dB: float
    sigma_dB: float = DEFAULT_SWEEP_SIGMA_DB

    def __post_init__(self):
        if not 0.0 <= self.pump_ratio < 1.0:
            raise ValueError(f"pump_ratio must be in [0, 1), got {self.pump_ratio}")
        if not self.sigma_dB > 0.0:
            raise ValueError(f"sigma_dB must be positive, got {self.sigma_dB}")


@dataclass(frozen=True)
class FitResult:
    """Estimated efficiency and phase jitter from a pump sweep.

    Sigmas come from the curvature of the weighted objective at the optimum;
    a parameter the data cannot constrain gets an infinite sigma.
    """

    eta_total: float
    eta_total_sigma: float
    theta_jitter: float
    theta_jitter_sigma: float
    p_thr_mW: float
    p_thr_mW_sigma: float | None
    p_thr_fixed: bool
    residual_rms: float
    chi_square: float
    n_points: int
    eta_at_bound: bool
    starts: int

    def interval(self, name: str, z: float = 1.96) -> tuple[float, float]:
        """Confidence interval for ``name``, clipped to the parameter's bounds.

        The variances depend on theta_jitter only through its square, so its
        interval is built on theta_jitter**2 and mapped back.
        """
        value = getattr(self, name)
        sigma = getattr(self, f"{name}_sigma")
        if sigma is None:
            return (value, value)
        if name == "theta_jitter":
            spread = 2.0 * value * sigma if math.isfinite(sigma) else math.inf
            low = math.sqrt(max(value**2 - z * spread, 0.0))
            return (low, math.sqrt(value**2 + z * spread))
        low, high = max(value - z * sigma, 0.0), value + z * sigma
        if name == "eta_total":
            high = min(high, 1.0)
        return (low, high)

    def to_dict(self) -> dict[str, Any]:
        return {
            "eta_total": self.eta_total,
            "eta_total_sigma": finite_or_none(self.eta_total_sigma),
            "theta_jitter": self.theta_jitter,
            "theta_jitter_sigma": finite_or_none(self.theta_jitter_sigma),
            "p_thr_mW": self.p_thr_mW,
            "p_thr_mW_sigma": finite_or_none(self.p_thr_mW_sigma),
            "p_thr_fixed": self.p_thr_fixed,
            "residual_rms": self.residual_rms,
            "chi_square": self.chi_square,
            "n_points": self.n_points,
            "eta_at_bound": self.eta_at_bound,
            "starts": self.starts,
        }


def _model_db(eta, theta, ratios, decay_rate, fourier_freq):
    v_plus, v_minus = ideal_variances(eta, decay_rate, ratios, fourier_freq)
    v_plus, v_minus = mix_quadratures(v_plus, v_minus, theta)
    return 10.0 * np.log10(v_minus), 10.0 * np.log10(v_plus)


def fit_pump_sweep(
    points: list[PumpSweepPoint],
    decay_rate: float,
    fourier_freq: float = FOURIER_FREQ,
    p_thr_mW: float = 710.0,
    fit_p_thr: bool = False,
) -> FitResult:
    """Fit (eta_total, theta_jitter[, P_thr]) to a pump-power sweep.

    Both quadratures enter one sigma-weighted least-squares problem in dB.
    A coarse (eta, theta) grid is evaluated first and the best grid points
    seed bounded trust-region refinements; the best refinement wins.

    Args:
        points: Sweep data; pump ratios are relative to ``p_thr_mW``.
        decay_rate: Cavity decay rate gamma (rad/s).
        fourier_freq: Measurement frequency (Hz).
        p_thr_mW: Known threshold power the ratios were computed with.
        fit_p_thr: Also fit the threshold power.

    Raises:
        ValueError: Fewer than 4 points or a pump range narrower than 0.3.
        FitError: No refinement converged; ``best`` holds the best parameters.
    """
    if len(points) < 4:
        raise ValueError(f"fit_pump_sweep needs at least 4 points, got {len(points)}")
    ratios = np.array([p.pump_ratio for p in points], dtype=float)
    if ratios.max() - ratios.min() < 0.3:
        raise ValueError(
            f"pump ratios must span at least 0.3, got {ratios.min():.3f}..{ratios.max():.3f}"
        )
    measured_minus = np.array([p.v_minus_dB for p in points], dtype=float)
    measured_plus = np.array([p.v_plus_dB for p in points], dtype=float)
    sigma = np.array([p.sigma_dB for p in points], dtype=float)

    def residuals(x: np.ndarray) -> np.ndarray:
        scale = p_thr_mW / x[2] if fit_p_thr else 1.0
        model_minus, model_plus = _model_db(
            x[0], x[1], ratios * scale, decay_rate, fourier_freq
        )
        return np.concatenate(
            [(model_minus - measured_minus) / sigma, (model_plus - measured_plus) / sigma]
        )

    eta_mesh, theta_mesh = np.meshgrid(ETA_GRID, THETA_GRID, indexing="ij")
    grid_minus, grid_plus = _model_db(
        eta_mesh.reshape(-1, 1),
        theta_mesh.reshape(-1, 1),
        ratios.reshape(1, -1),
        decay_rate,
        fourier_freq,
    )
    grid_cost = (((grid_minus - measured_minus) / sigma) ** 2).sum(axis=1) + (
        ((grid_plus - measured_plus) / sigma) ** 2
    ).sum(axis=1)
    order = np.argsort(grid_cost, kind="stable")[:_N_STARTS]

    lower = [0.0, 0.0]
    upper = [1.0, _THETA_UPPER]
    if fit_p_thr:
        lower.append(p_thr_mW * ratios.max() * 1.0001)
        upper.append(p_thr_mW * 10.0)

    best = None
    best_grid = None
    for idx in order:
        x0 = [float(eta_mesh.flat[idx]), float(theta_mesh.flat[idx])]
        if fit_p_thr:
            x0.append(max(p_thr_mW, lower[2] * 1.01))
        x0 = np.clip(x0, lower, upper)
        if best_grid is None:
            best_grid = x0
        try:
            result = least_squares(
                residuals,
                x0,
                bounds=(lower, upper),
                method="trf",
                x_scale="jac",
                ftol=1e-15,
                xtol=1e-15,
                gtol=1e-15,
                max_nfev=2000,
            )
        except ValueError:
            continue
        if result.status <= 0 or not np.isfinite(result.cost):
            continue
        if best is None or result.cost < best.cost:
            best = result

    if best is None:
        x = best_grid
        raise FitError(
            "pump sweep fit did not converge from any start",
            best={
                "eta_total": float(x[0]),
                "theta_jitter": float(x[1]),
                "p_thr_mW": float(x[2]) if fit_p_thr else p_thr_mW,
                "chi_square": float(grid_cost.min()),
            },
        )

    x = best.x
    sigmas = _parameter_sigmas(best.jac)
    dB_residuals = best.fun * np.concatenate([sigma, sigma])
    eta = float(x[0])
    return FitResult(
        eta_total=eta,
        eta_total_sigma=sigmas[0],
        theta_jitter=float(x[1]),
        theta_jitter_sigma=sigmas[1],
        p_thr_mW=float(x[2]) if fit_p_thr else float(p_thr_mW),
        p_thr_mW_sigma=sigmas[2] if fit_p_thr else None,
        p_thr_fixed=not fit_p_thr,
        residual_rms=float(np.sqrt(np.mean(dB_residuals**2))),
        chi_square=float(2.0 * best.cost),
        n_points=len(points),
        eta_at_bound=bool(eta <= 1e-6 or eta >= 1.0 - 1e-6),
        starts=len(order),
    )


def _parameter_sigmas(jac: np.ndarray) -> list[float]:
    """Standard errors from the Gauss-Newton covariance (J^T J)^-1."""
    jtj = jac.T @ jac
    cov = np.linalg.pinv(jtj)
    sigmas = []
    for i in range(jtj.shape[0]):
        column_norm = float(np.linalg.norm(jac[:, i]))
        if column_norm < 1e-12 or not cov[i, i] > 0.0:
            sigmas.append(math.inf)
        else:
            sigmas.append(float(np.sqrt(cov[i, i])))
    return sigmas


def synthesize_pump_sweep(
    params: ModelParams,
    ratios=DEFAULT_SWEEP_RATIOS,
    sigma_dB: float = DEFAULT_SWEEP_SIGMA_DB,
    seed: int | None = 0,
    fourier_freq: float = FOURIER_FREQ,
    noise: bool = True,
) -> list[PumpSweepPoint]:
    """Pump sweep generated by the model, with seeded Gaussian dB noise."""
    ratios = np.asarray(ratios, dtype=float)
    minus_db, plus_db = _model_db(
        params.total_efficiency,
        params.phase_jitter,
        ratios,
        params.decay_rate,
        fourier_freq,
    )
    if noise and sigma_dB > 0.0:
        rng = np.random.default_rng(seed)
        minus_db = minus_db + sigma_dB * rng.standard_normal(len(ratios))
        plus_db = plus_db + sigma_dB * rng.standard_normal(len(ratios))
    return [
        PumpSweepPoint(
            pump_ratio=float(r), v_minus_dB=float(m), v_plus_dB=float(p), sigma_dB=sigma_dB
        )
        for r, m, p in zip(ratios, minus_db, plus_db)
    ]


def pump_sweep_curve(
    params: ModelParams,
    ratios=None,
    fourier_freq: float = FOURIER_FREQ,
) -> pd.DataFrame:
    """Dense model curve of both quadratures versus pump ratio, for plotting."""
    if ratios is None:
        ratios = np.linspace(0.0, 0.95, 96)
    ratios = np.asarray(ratios, dtype=float)
    minus_db, plus_db = _model_db(
        params.total_efficiency,
        params.phase_jitter,
        ratios,
        params.decay_rate,
        fourier_freq,
    )
    return pd.DataFrame(
        {"pump_ratio": ratios, "v_minus_dB": minus_db, "v_plus_dB": plus_db}
    )


SWEEP_COLUMNS = ("pump_ratio", "v_minus_dB", "v_plus_dB", "sigma_dB")


def write_sweep_csv(points: list[PumpSweepPoint], path: str | Path) -> Path:
    path = Path(path)
    frame = pd.DataFrame(
        [
            {
                "pump_ratio": p.pump_ratio,
                "v_minus_dB": p.v_minus_dB,
                "v_plus_dB": p.v_plus_dB,
                "sigma_dB": p.sigma_dB,
            }
            for p in points
        ],
        columns=list(SWEEP_COLUMNS),
    )
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    return path


def read_sweep_csv(
    path: str | Path, default_sigma_dB: float = DEFAULT_SWEEP_SIGMA_DB
) -> list[PumpSweepPoint]:
    """Load a pump sweep; ``sigma_dB`` is optional and defaults to 0.1 dB.

    Raises:
        SchemaError: Empty file, missing columns or a bad value, naming the
            column and the 1-based file row.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"Sweep CSV '{path}' is empty") from e
    if "pump_ratio" not in frame.columns:
        raise SchemaError(f"Sweep CSV '{path}' is missing column 'pump_ratio'")
    quadratures = [c for c in ("v_minus_dB", "v_plus_dB") if c in frame.columns]
    if len(quadratures) < 2:
        raise SchemaError(
            f"Sweep CSV '{path}': both quadratures required "
            f"(columns v_minus_dB and v_plus_dB), found {quadratures or 'none'}"
        )
    if frame.empty:
        raise SchemaError(f"Sweep CSV '{path}' has no rows")
    if "sigma_dB" not in frame.columns:
        frame["sigma_dB"] = default_sigma_dB

    points = []
    for i, row in enumerate(frame.itertuples(index=False)):
        for column in SWEEP_COLUMNS:
            value = getattr(row, column)
            try:
                ok = math.isfinite(float(value))
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise SchemaError(
                    f"Sweep CSV row {i + 2}: column '{column}' must be a finite number, "
                    f"got {value!r}"
                )
        try:
            points.append(
                PumpSweepPoint(
                    pump_ratio=float(row.pump_ratio),
                    v_minus_dB=float(row.v_minus_dB),
                    v_plus_dB=float(row.v_plus_dB),
                    sigma_dB=float(row.sigma_dB),
                )
            )
        except ValueError as e:
            raise SchemaError(f"Sweep CSV row {i + 2}: {e}") from e
    return points


# -- duty cycle ---------------------------------------------------------------


def _sample_weights(times: np.ndarray) -> np.ndarray:
    """Each sample holds until the next one; the last reuses the previous interval."""
    if len(times) == 1:
        return np.ones(1)
    gaps = np.diff(times)
    return np.append(gaps, gaps[-1])


@dataclass(frozen=True)
class DutyCycleReport:
    """Time-weighted lock and squeezing statistics of a trace.

    ``cumulative`` is the fraction of total time spent locked with at least the
    given squeezing magnitude (relock time counts as downtime);
    ``cumulative_locked`` uses locked time as denominator instead.
    """

    total_duration: float
    locked_duration: float
    lock_fraction: float
    cumulative: list[tuple[float, float]]
    cumulative_locked: list[tuple[float, float]]
    histogram_edges: list[float]
    histogram_counts: list[int]
    mean_dB_of_dB: float
    dB_of_mean_variance: float
    max_dB: float
    n_samples: int
    extra: dict[str, Any] = field(default_factory=dict)

    def duty(self, threshold_dB: float, locked_only: bool = False) -> float:
        pairs = self.cumulative_locked if locked_only else self.cumulative
        for threshold, fraction in pairs:
            if threshold == threshold_dB:
                return fraction
        raise KeyError(f"threshold {threshold_dB} dB not in report")

    def histogram_frame(self) -> pd.DataFrame:
        edges = self.histogram_edges
        return pd.DataFrame(
            {
                "bin_low_dB": edges[:-1],
                "bin_high_dB": edges[1:],
                "count": self.histogram_counts,
            }
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "total_duration": self.total_duration,
            "locked_duration": self.locked_duration,
            "lock_fraction": self.lock_fraction,
            "cumulative": [
                {"threshold_dB": t, "fraction": f} for t, f in self.cumulative
            ],
            "cumulative_locked": [
                {"threshold_dB": t, "fraction": f} for t, f in self.cumulative_locked
            ],
            "histogram": {
                "bin_edges_dB": self.histogram_edges,
                "counts": self.histogram_counts,
            },
            "mean_dB_of_dB": finite_or_none(self.mean_dB_of_dB),
            "dB_of_mean_variance": finite_or_none(self.dB_of_mean_variance),
            "max_dB": finite_or_none(self.max_dB),
            "n_samples": self.n_samples,
            **self.extra,
        }


def _level_means(levels: np.ndarray, weights: np.ndarray) -> tuple[float, float, float]:
    if len(levels) == 0 or weights.sum() <= 0.0:
        return math.nan, math.nan, math.nan
    mean_db = float(np.average(levels, weights=weights))
    mean_variance = float(np.average(10.0 ** (-levels / 10.0), weights=weights))
    return mean_db, -to_decibels(mean_variance), float(levels.max())


def duty_cycle_report(
    trace: Trace,
    thresholds_dB=DEFAULT_THRESHOLDS_DB,
    bin_dB: float = HISTOGRAM_BIN_DB,
) -> DutyCycleReport:
    """Lock fraction, cumulative duty cycle and squeezing histogram of a trace.

    Raises:
        ValueError: If the trace is empty.
    """
    if len(trace) == 0:
        raise ValueError("duty_cycle_report needs a non-empty trace")
    times = trace.times()
    levels = trace.squeezing_levels()
    locked = trace.locked_mask()
    weights = _sample_weights(times)
    total = float(weights.sum())
    locked_time = float(weights[locked].sum())

    thresholds = sorted(float(t) for t in thresholds_dB)
    cumulative = []
    cumulative_locked = []
    for threshold in thresholds:
        above = float(weights[locked & (levels >= threshold)].sum())
        cumulative.append((threshold, above / total))
        cumulative_locked.append(
            (threshold, above / locked_time if locked_time > 0.0 else 0.0)
        )

    locked_levels = levels[locked]
    if len(locked_levels):
        low = math.floor(locked_levels.min() / bin_dB) * bin_dB
        n_bins = max(1, math.ceil((locked_levels.max() - low) / bin_dB + 1e-9))
        edges = np.round(low + bin_dB * np.arange(n_bins + 1), 10)
        if edges[-1] < locked_levels.max():
            edges = np.append(edges, round(edges[-1] + bin_dB, 10))
        counts, edges = np.histogram(locked_levels, bins=edges)
    else:
        counts, edges = np.array([], dtype=int), np.array([], dtype=float)

    mean_db, db_of_mean, max_db = _level_means(locked_levels, weights[locked])
    return DutyCycleReport(
        total_duration=total,
        locked_duration=locked_time,
        lock_fraction=locked_time / total,
        cumulative=cumulative,
        cumulative_locked=cumulative_locked,
        histogram_edges=[float(e) for e in edges],
        histogram_counts=[int(c) for c in counts],
        mean_dB_of_dB=mean_db,
        dB_of_mean_variance=db_of_mean,
        max_dB=max_db,
        n_samples=len(trace),
    )


@dataclass(frozen=True)
class TraceSummary:
    mean_dB_of_dB: float
    dB_of_mean_variance: float
    max_dB: float
    relock_count: int
    longest_unbroken_lock_s: float
    duration_s: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_dB_of_dB": finite_or_none(self.mean_dB_of_dB),
            "dB_of_mean_variance": finite_or_none(self.dB_of_mean_variance),
            "max_dB": finite_or_none(self.max_dB),
            "relock_count": self.relock_count,
            "longest_unbroken_lock_s": self.longest_unbroken_lock_s,
            "duration_s": self.duration_s,
        }


RELOCK_EVENT = "relock-triggered"


def summarize_trace(trace: Trace) -> TraceSummary:
    """Averages under both conventions, peak squeezing and lock episodes.

    Averages use locked samples only; magnitudes are positive dB below shot
    noise.
    """
    if len(trace) == 0:
        raise ValueError("summarize_trace needs a non-empty trace")
    times = trace.times()
    levels = trace.squeezing_levels()
    locked = trace.locked_mask()
    weights = _sample_weights(times)
    mean_db, db_of_mean, max_db = _level_means(levels[locked], weights[locked])

    longest = 0.0
    current = 0.0
    for is_locked, weight in zip(locked.tolist(), weights.tolist()):
        if is_locked:
            current += weight
            longest = max(longest, current)
        else:
            current = 0.0

    return TraceSummary(
        mean_dB_of_dB=mean_db,
        dB_of_mean_variance=db_of_mean,
        max_dB=max_db,
        relock_count=sum(1 for event in trace.events() if event == RELOCK_EVENT),
        longest_unbroken_lock_s=longest,
        duration_s=float(weights.sum()),
    )
