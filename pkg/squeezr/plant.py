"""Seeded discrete-time simulator of the squeezed-light apparatus.

The plant holds the hidden state the controllers never see directly: pump
power (Ornstein-Uhlenbeck), the squeezing-angle mismatch between pump and
local oscillator (random walk plus optional linear heating drift), a slow
resonance detuning, the four lock channels and the mode the OPA sits on.
Controllers act only through the public operations: ``set_lock``,
``lock_to_mode``, ``apply_phase_offset``, ``step`` and the readouts.

Stochastic increments come from a single PCG64 stream consumed in a fixed
order, so a (config, seed, command sequence) triple fully determines the
trajectory.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from squeezr.characterize import contaminate_electronic_noise, correct_electronic_noise
from squeezr.exceptions import ConfigError, LockSequenceError
from squeezr.locks import ChannelId, LockChain, LockChannel, LockStatus
from squeezr.model import (
    ModelParams,
    OperatingPoint,
    apply_phase_jitter,
    quadrature_variance,
    from_decibels,
    rotate_quadratures,
    to_decibels,
)

logger = logging.getLogger(__name__)

# Acquisition timers are decremented in float steps; anything below this is done.
_TIMER_EPS = 1e-9

# A raw reading at the dark-noise level would correct to zero variance.
_RAW_FLOOR_FACTOR = 1.001


class Disturbance(str, Enum):
    LOCK_LOSS = "LockLoss"
    PUMP_JUMP = "PumpJump"
    RESONANCE_SHIFT = "ResonanceShift"


@dataclass(frozen=True)
class PlantConfig:
    """Configuration of the simulated apparatus.

    Drift magnitudes are calibration, not measured physics: the defaults make
    an uncontrolled system fall below 9.5 dB of squeezing after roughly 10 to
    30 minutes, which is what puts a 50 hour auto-relock campaign into the
    96 to 99 % duty-cycle band.

    Attributes:
        model: Cavity and detection parameters used for the squeezing readout.
        nominal_pump_ratio: Mean pump power as a fraction of threshold.
        n_modes_per_scan: Resonant modes per OPA piezo scan.
        double_resonance_mode: Index of the doubly-resonant mode. None draws
            it from the seed.
        pump_relaxation_time: OU relaxation time of the pump power (s).
        pump_rms_fraction: Stationary rms of the pump power, relative.
        angle_walk_rate: Squeezing-angle random walk (rad/sqrt(s)).
        angle_drift_rate: Deterministic squeezing-angle drift (rad/s).
        resonance_walk_rate: Resonance detuning random walk (1/sqrt(s)).
        lock_loss_rate: Poisson rate of sporadic lock losses (1/s).
        pump_jump_fraction: Relative pump step of a PumpJump disturbance.
        resonance_shift_rms: Detuning rms drawn by a ResonanceShift.
        measurement_period: Interval between spectrum-analyzer readings (s).
        readout_noise_db: Gaussian rms added to every raw dB reading, before
            the electronic-noise correction.
        electronic_noise_clearance_db: Dark noise level below shot noise.
        acquisition_time: Dead time before an engaged lock is Locked (s).
        dt: Integration step (s).
        beat_resonant: Omega beat amplitude with B locked on double resonance.
        beat_full: Omega beat amplitude with every lock engaged on double resonance.
        beat_floor: Beat amplitude without double resonance.
        beat_noise: Additive rms noise on beat readings.
        faulty_channels: Channels that accept engage commands but never lock.
        max_pump_ratio: Effective pump ratio is clipped to stay below threshold.
    """

    model: ModelParams = field(default_factory=ModelParams)
    nominal_pump_ratio: float = 0.67
    n_modes_per_scan: int = 8
    double_resonance_mode: int | None = None
    pump_relaxation_time: float = 60.0
    pump_rms_fraction: float = 0.005
    angle_walk_rate: float = 6.75e-4
    angle_drift_rate: float = 0.0
    resonance_walk_rate: float = 1.0e-3
    lock_loss_rate: float = 1.0 / 7200.0
    pump_jump_fraction: float = 0.10
    resonance_shift_rms: float = 0.3
    measurement_period: float = 1.0
    readout_noise_db: float = 0.05
    electronic_noise_clearance_db: float = 18.0
    acquisition_time: float = 2.0
    dt: float = 0.1
    beat_resonant: float = 0.9
    beat_full: float = 1.0
    beat_floor: float = 0.05
    beat_noise: float = 0.02
    faulty_channels: tuple[ChannelId, ...] = ()
    max_pump_ratio: float = 0.99
    fundamental_wavelength: float = 1550e-9
    harmonic_wavelength: float = 775e-9
    aom_shift_hz: float = 80e6

    def __post_init__(self):
        non_negative = (
            "pump_relaxation_time",
            "pump_rms_fraction",
            "angle_walk_rate",
            "resonance_walk_rate",
            "lock_loss_rate",
            "pump_jump_fraction",
            "resonance_shift_rms",
            "readout_noise_db",
            "acquisition_time",
            "beat_noise",
        )
        for name in non_negative:
            value = getattr(self, name)
            if not value >= 0.0:
                raise ConfigError(f"plant.{name} must be >= 0, got {value}")
        for name in ("measurement_period", "dt", "electronic_noise_clearance_db"):
            value = getattr(self, name)
            if not value > 0.0:
                raise ConfigError(f"plant.{name} must be > 0, got {value}")
        if self.pump_rms_fraction > 0.0 and self.pump_relaxation_time == 0.0:
            raise ConfigError(
                "plant.pump_relaxation_time must be > 0 when pump_rms_fraction is set"
            )
        if not 0.0 <= self.nominal_pump_ratio < 1.0:
            raise ConfigError(
                f"plant.nominal_pump_ratio must be in [0, 1), got {self.nominal_pump_ratio}"
            )
        if not 0.0 < self.max_pump_ratio < 1.0:
            raise ConfigError(
                f"plant.max_pump_ratio must be in (0, 1), got {self.max_pump_ratio}"
            )
        if int(self.n_modes_per_scan) != self.n_modes_per_scan or self.n_modes_per_scan < 2:
            raise ConfigError(
                f"plant.n_modes_per_scan must be an integer >= 2, got {self.n_modes_per_scan}"
            )
        mode = self.double_resonance_mode
        if mode is not None and not 0 <= mode < self.n_modes_per_scan:
            raise ConfigError(
                f"plant.double_resonance_mode must be in [0, {self.n_modes_per_scan}), "
                f"got {mode}"
            )
        for name in ("beat_resonant", "beat_full", "beat_floor"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"plant.{name} must be in [0, 1], got {value}")
        object.__setattr__(
            self,
            "faulty_channels",
            tuple(ChannelId.parse(c) for c in self.faulty_channels),
        )

    @property
    def threshold_power(self) -> float:
        return self.model.threshold_power

    @property
    def nominal_pump_power(self) -> float:
        return self.nominal_pump_ratio * self.model.threshold_power

    @property
    def is_frozen(self) -> bool:
        """True when no stochastic process or sporadic event is active."""
        return (
            self.pump_rms_fraction == 0.0
            and self.angle_walk_rate == 0.0
            and self.angle_drift_rate == 0.0
            and self.resonance_walk_rate == 0.0
            and self.lock_loss_rate == 0.0
        )

    def replace(self, **changes: Any) -> PlantConfig:
        return dataclasses.replace(self, **changes)

    def frozen(self, noiseless: bool = False) -> PlantConfig:
        """Copy with every drift and sporadic event switched off."""
        changes: dict[str, Any] = dict(
            pump_rms_fraction=0.0,
            angle_walk_rate=0.0,
            angle_drift_rate=0.0,
            resonance_walk_rate=0.0,
            lock_loss_rate=0.0,
        )
        if noiseless:
            changes.update(readout_noise_db=0.0, beat_noise=0.0)
        return self.replace(**changes)


@dataclass(frozen=True)
class CoherentControlState:
    """Phases and beat notes of the coherent-control fields.

    The 2-Omega beat is the pump/CSF error signal of lock B, the Omega beat the
    CSF/LO signal of lock C. Omega reaches its maximum only with all four locks
    held on the doubly-resonant mode.
    """

    phase_offset_B: float
    phase_offset_C: float
    beat_amplitude_2omega: float
    beat_amplitude_omega: float


@dataclass(frozen=True)
class PlantState:
    time: float
    channels: tuple[LockChannel, ...]
    current_mode: int | None
    target_mode: int
    double_resonance_mode: int
    pump_power: float
    angle_walk: float
    phase_offset: float
    resonance_detuning: float
    stored_mode_offsets: tuple[float, ...]
    rng_state: Any = field(compare=True, repr=False)

    @property
    def angle_error(self) -> float:
        return self.angle_walk - self.phase_offset

    def channel(self, channel: ChannelId | str) -> LockChannel:
        channel = ChannelId.parse(channel)
        return next(c for c in self.channels if c.identifier is channel)


@dataclass(frozen=True)
class Measurement:
    """One readout of the homodyne detector and the Omega beat note.

    ``valid`` is False whenever the squeezer is not fully locked on the
    doubly-resonant mode; the squeezing reading then sits at shot noise.
    """

    t: float
    squeezing_db: float
    antisqueezing_db: float | None
    valid: bool
    beat_amplitude: float
    pump_mW: float

    @property
    def squeezing_level(self) -> float:
        return -self.squeezing_db


class _BlockRng:
    """Buffered draws from one PCG64 stream."""

    def __init__(self, seed: int, block_size: int = 4096):
        self._generator = np.random.Generator(np.random.PCG64(seed))
        self._block_size = block_size
        self._normals: list[float] = []
        self._normal_pos = 0
        self._uniforms: list[float] = []
        self._uniform_pos = 0

    def normal(self) -> float:
        if self._normal_pos >= len(self._normals):
            self._normals = self._generator.standard_normal(self._block_size).tolist()
            self._normal_pos = 0
        value = self._normals[self._normal_pos]
        self._normal_pos += 1
        return value

    def uniform(self) -> float:
        if self._uniform_pos >= len(self._uniforms):
            self._uniforms = self._generator.random(self._block_size).tolist()
            self._uniform_pos = 0
        value = self._uniforms[self._uniform_pos]
        self._uniform_pos += 1
        return value

    def choice(self, n: int) -> int:
        return min(int(self.uniform() * n), n - 1)

    @property
    def state(self) -> tuple:
        return (
            self._generator.bit_generator.state,
            self._normal_pos,
            self._uniform_pos,
            len(self._normals),
            len(self._uniforms),
        )


class Plant:
    """The simulated apparatus. Single owner, mutated in place.

    Use :func:`init_plant` to build one; :meth:`snapshot` returns an
    immutable :class:`PlantState`.
    """

    def __init__(self, config: PlantConfig, seed: int, chain: LockChain | None = None):
        if not isinstance(config, PlantConfig):
            raise ConfigError(f"Expected a PlantConfig, got {type(config).__name__}")
        self.config = config
        self.seed = seed
        self.chain = chain or LockChain()
        self._rng = _BlockRng(seed)
        self._time = 0.0
        self._status = {channel: LockStatus.DISENGAGED for channel in ChannelId}
        self._remaining = {channel: 0.0 for channel in ChannelId}
        self._actuator = {channel: 0.0 for channel in ChannelId}
        self._acquiring: list[ChannelId] = []
        self._current_mode: int | None = None
        self._target_mode = 0

        n = config.n_modes_per_scan
        self._stored_mode_offsets = tuple(
            (i + 0.5) / n + 0.02 * (self._rng.uniform() - 0.5) for i in range(n)
        )
        if config.double_resonance_mode is None:
            self._double_resonance_mode = self._rng.choice(n)
        else:
            self._double_resonance_mode = config.double_resonance_mode

        nominal = config.nominal_pump_power
        self._pump_sd = config.pump_rms_fraction * nominal
        self._pump_power = nominal
        if self._pump_sd > 0.0:
            self._pump_power = max(0.0, nominal + self._pump_sd * self._rng.normal())
        self._angle_walk = 0.0
        self._phase_offset = 0.0
        self._detuning = 0.0
        self._ou_cache: tuple[float, float, float] | None = None

    # -- inspection -------------------------------------------------------

    @property
    def time(self) -> float:
        return self._time

    @property
    def double_resonance_mode(self) -> int:
        return self._double_resonance_mode

    @property
    def current_mode(self) -> int | None:
        return self._current_mode

    @property
    def angle_error(self) -> float:
        return self._angle_walk - self._phase_offset

    @property
    def pump_power(self) -> float:
        return self._pump_power

    @property
    def resonance_detuning(self) -> float:
        return self._detuning

    def status(self, channel: ChannelId | str) -> LockStatus:
        return self._status[ChannelId.parse(channel)]

    def is_locked(self, channel: ChannelId | str) -> bool:
        return self._status[ChannelId.parse(channel)] is LockStatus.LOCKED

    @property
    def all_locked(self) -> bool:
        return all(s is LockStatus.LOCKED for s in self._status.values())

    @property
    def double_resonant(self) -> bool:
        return (
            self._status[ChannelId.OPA_LENGTH] is LockStatus.LOCKED
            and self._current_mode == self._double_resonance_mode
        )

    @property
    def squeezing_available(self) -> bool:
        return self.all_locked and self._current_mode == self._double_resonance_mode

    @property
    def effective_pump_ratio(self) -> float:
        ratio = self._pump_power / self.config.threshold_power
        ratio *= math.exp(-self._detuning * self._detuning)
        return min(ratio, self.config.max_pump_ratio)

    def snapshot(self) -> PlantState:
        channels = tuple(
            LockChannel(
                identifier=channel,
                status=self._status[channel],
                remaining=self._remaining[channel],
                actuator_offset=self._actuator[channel],
            )
            for channel in self.chain.engage_order()
        )
        return PlantState(
            time=self._time,
            channels=channels,
            current_mode=self._current_mode,
            target_mode=self._target_mode,
            double_resonance_mode=self._double_resonance_mode,
            pump_power=self._pump_power,
            angle_walk=self._angle_walk,
            phase_offset=self._phase_offset,
            resonance_detuning=self._detuning,
            stored_mode_offsets=self._stored_mode_offsets,
            rng_state=self._rng.state,
        )

    def coherent_control(self) -> CoherentControlState:
        """Noiseless beat amplitudes and the B / C lock-point phases.

        Lock B holds the pump/CSF phase at the 2-Omega zero crossing, which
        moves by atan(detuning) with the residual OPA resonance detuning.
        """
        cfg = self.config
        b_locked = self._status[ChannelId.PUMP_CSF_OFFSET] is LockStatus.LOCKED
        return CoherentControlState(
            phase_offset_B=math.atan(self._detuning) if b_locked else 0.0,
            phase_offset_C=self._phase_offset,
            beat_amplitude_2omega=cfg.beat_full if b_locked else cfg.beat_floor,
            beat_amplitude_omega=self._omega_beat(),
        )

    # -- time evolution ---------------------------------------------------

    def step(self, dt: float | None = None) -> None:
        """Advance the plant by one integration step of ``dt`` seconds."""
        cfg = self.config
        if dt is None:
            dt = cfg.dt
        if not dt > 0.0:
            raise ValueError(f"dt must be > 0, got {dt}")
        rng = self._rng
        self._time += dt

        if self._pump_sd > 0.0:
            a, b, _ = self._ou_coefficients(dt)
            mean = cfg.nominal_pump_power
            self._pump_power = max(
                0.0, mean + a * (self._pump_power - mean) + b * rng.normal()
            )
        if cfg.angle_walk_rate > 0.0:
            self._angle_walk += cfg.angle_walk_rate * math.sqrt(dt) * rng.normal()
        if cfg.angle_drift_rate != 0.0:
            self._angle_walk += cfg.angle_drift_rate * dt
        if cfg.resonance_walk_rate > 0.0:
            self._detuning += cfg.resonance_walk_rate * math.sqrt(dt) * rng.normal()
        if cfg.lock_loss_rate > 0.0:
            if rng.uniform() < 1.0 - math.exp(-cfg.lock_loss_rate * dt):
                locked = [c for c in self.chain.engage_order() if self.is_locked(c)]
                if locked:
                    hit = locked[rng.choice(len(locked))]
                    logger.info("Sporadic lock loss on %s at t=%.1f s", hit.short, self._time)
                    self._disengage(hit)

        if self._acquiring:
            self._advance_timers(dt)

    def advance(self, seconds: float) -> None:
        """Step the plant through ``seconds`` of simulated time."""
        if seconds <= 0.0:
            return
        dt = self.config.dt
        for _ in range(max(1, round(seconds / dt))):
            self.step(dt)

    def _ou_coefficients(self, dt: float) -> tuple[float, float, float]:
        if self._ou_cache is None or self._ou_cache[2] != dt:
            a = math.exp(-dt / self.config.pump_relaxation_time)
            self._ou_cache = (a, self._pump_sd * math.sqrt(1.0 - a * a), dt)
        return self._ou_cache

    def _advance_timers(self, dt: float) -> None:
        for channel in list(self._acquiring):
            if channel in self.config.faulty_channels:
                continue
            self._remaining[channel] = max(0.0, self._remaining[channel] - dt)
            if self._remaining[channel] > _TIMER_EPS:
                continue
            if self.chain.missing_prerequisites(channel, self._status):
                continue
            self._complete(channel)

    def _complete(self, channel: ChannelId) -> None:
        self._status[channel] = LockStatus.LOCKED
        self._remaining[channel] = 0.0
        self._acquiring.remove(channel)
        if channel is ChannelId.OPA_LENGTH:
            self._current_mode = self._target_mode
            self._detuning = 0.0
        logger.debug("%s locked at t=%.1f s", channel.short, self._time)

    def _disengage(self, channel: ChannelId) -> None:
        for dropped in [channel, *self.chain.dependents(channel)]:
            self._status[dropped] = LockStatus.DISENGAGED
            self._remaining[dropped] = 0.0
            if dropped in self._acquiring:
                self._acquiring.remove(dropped)
            if dropped is ChannelId.OPA_LENGTH:
                self._current_mode = None

    # -- commands ---------------------------------------------------------

    def set_lock(self, channel: ChannelId | str, engage: bool) -> None:
        """Engage (start acquiring) or disengage one lock channel.

        Raises:
            LockSequenceError: If a prerequisite of the channel is not Locked.
        """
        channel = ChannelId.parse(channel)
        if not engage:
            self._disengage(channel)
            return
        if self._status[channel] is not LockStatus.DISENGAGED:
            return
        missing = self.chain.missing_prerequisites(channel, self._status)
        if missing:
            raise LockSequenceError(
                f"Cannot engage {channel.short}: prerequisite "
                f"{', '.join(c.short for c in missing)} not locked"
            )
        if channel is ChannelId.OPA_LENGTH:
            self._actuator[channel] = self._stored_mode_offsets[self._target_mode]
        self._start_acquiring(channel)

    def _start_acquiring(self, channel: ChannelId) -> None:
        self._status[channel] = LockStatus.ACQUIRING
        self._remaining[channel] = self.config.acquisition_time
        if channel not in self._acquiring:
            self._acquiring.append(channel)
        if self.config.acquisition_time <= _TIMER_EPS and (
            channel not in self.config.faulty_channels
        ):
            self._complete(channel)

    def lock_to_mode(self, mode_index: int) -> None:
        """Move the OPA length lock to one of the stored resonance offsets.

        The OPA re-acquires on the new mode; B and C are dropped with it.
        """
        n = self.config.n_modes_per_scan
        if int(mode_index) != mode_index or not 0 <= mode_index < n:
            raise ValueError(f"mode_index must be in [0, {n}), got {mode_index}")
        opa = ChannelId.OPA_LENGTH
        if self._status[opa] is LockStatus.DISENGAGED:
            raise LockSequenceError("lock_to_mode requires the OPA length lock engaged")
        for dependent in self.chain.dependents(opa):
            self._disengage(dependent)
        self._target_mode = int(mode_index)
        self._current_mode = None
        self._actuator[opa] = self._stored_mode_offsets[self._target_mode]
        self._start_acquiring(opa)

    def apply_phase_offset(self, delta: float) -> None:
        """Shift the B/C phase offset; the squeezing angle error moves by -delta."""
        if self._status[ChannelId.CSF_LO_OFFSET] is not LockStatus.LOCKED:
            raise LockSequenceError("apply_phase_offset requires lock C Locked")
        self._phase_offset += delta
        self._actuator[ChannelId.CSF_LO_OFFSET] = self._phase_offset

    def inject_disturbance(
        self, kind: Disturbance | str, *, mode: int | None = None
    ) -> None:
        """Apply a sporadic disturbance immediately.

        Args:
            kind: LockLoss, PumpJump or ResonanceShift.
            mode: For ResonanceShift, the new doubly-resonant mode. Drawn from
                the plant's stream when omitted.
        """
        kind = Disturbance(kind)
        logger.info("Injected %s at t=%.1f s", kind.value, self._time)
        if kind is Disturbance.LOCK_LOSS:
            self._disengage(ChannelId.OPA_LENGTH)
        elif kind is Disturbance.PUMP_JUMP:
            self._pump_power *= 1.0 + self.config.pump_jump_fraction
        else:
            n = self.config.n_modes_per_scan
            if mode is None:
                mode = self._rng.choice(n)
            elif not 0 <= mode < n:
                raise ValueError(f"mode must be in [0, {n}), got {mode}")
            self._double_resonance_mode = int(mode)
            self._detuning = self.config.resonance_shift_rms * self._rng.normal()

    # -- readouts ---------------------------------------------------------

    def _omega_beat(self) -> float:
        cfg = self.config
        if not (self.is_locked(ChannelId.PUMP_CSF_OFFSET) and self.double_resonant):
            return cfg.beat_floor
        return cfg.beat_full if self.all_locked else cfg.beat_resonant

    def read_beat_amplitude(self) -> float:
        """Omega beat amplitude with additive noise, clipped to [0, 1]."""
        amplitude = self._omega_beat()
        if self.config.beat_noise > 0.0:
            amplitude += self.config.beat_noise * self._rng.normal()
        return min(1.0, max(0.0, amplitude))

    def _noisy(self, value_db: float) -> float:
        if self.config.readout_noise_db > 0.0:
            return value_db + self.config.readout_noise_db * self._rng.normal()
        return value_db

    def _corrected_reading(self, variance: float) -> float:
        """Reading of ``variance`` in dB.

        Dark noise and readout noise enter the raw trace; the reading is then
        corrected for the dark noise.
        """
        clearance = self.config.electronic_noise_clearance_db
        raw_db = self._noisy(to_decibels(contaminate_electronic_noise(variance, clearance)))
        dark = 10.0 ** (-clearance / 10.0)
        raw = max(from_decibels(raw_db), _RAW_FLOOR_FACTOR * dark / (1.0 + dark))
        return to_decibels(correct_electronic_noise(raw, clearance))

    def read_squeezing(self) -> Measurement:
        """Noise-normalised squeezing and anti-squeezing, plus the beat reading."""
        cfg = self.config
        if self.squeezing_available:
            pair = quadrature_variance(
                cfg.model, OperatingPoint(pump_ratio=self.effective_pump_ratio)
            )
            pair = apply_phase_jitter(
                rotate_quadratures(pair, self.angle_error), cfg.model.phase_jitter
            )
            squeezing = self._corrected_reading(pair.v_squeezed)
            antisqueezing: float | None = self._corrected_reading(pair.v_antisqueezed)
            valid = True
        else:
            squeezing = self._corrected_reading(1.0)
            antisqueezing = None
            valid = False
        return Measurement(
            t=self._time,
            squeezing_db=squeezing,
            antisqueezing_db=antisqueezing,
            valid=valid,
            beat_amplitude=self.read_beat_amplitude(),
            pump_mW=self._pump_power * 1e3,
        )

    def __repr__(self):
        locks = ", ".join(
            f"{c.short}={self._status[c].value}" for c in self.chain.engage_order()
        )
        return f"Plant(t={self._time:.1f}s, {locks}, mode={self._current_mode})"


def init_plant(config: PlantConfig | None = None, seed: int = 0) -> Plant:
    """Build a plant with every lock Disengaged and drifts drawn from ``seed``."""
    if int(seed) != seed or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed}")
    return Plant(config or PlantConfig(), int(seed))
